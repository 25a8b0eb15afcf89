import pytest

from inv2inv.config import RunConfig, parse_config, parse_config_text, write_config
from inv2inv.errors import ConfigError


def test_empty_file_gives_defaults():
    cfg = parse_config_text("")
    assert cfg["energy.lambda_g"] == 0.1
    assert cfg["energy.lambda_a"] == 2.0
    assert cfg["sampler.m_frac"] == 0.4
    assert cfg["sampler.steps"] == 200
    assert cfg["sampler.k"] == 1
    assert cfg == RunConfig()


def test_parses_values_comments_and_paths():
    cfg = parse_config_text("# comment\n\nsampler.steps = 50\nsampler.literal_sign = true\n"
                            "lowpass.factor = 4\npaths.score = model\nsampler.mode = sdedit\n")
    assert cfg["sampler.steps"] == 50
    assert cfg["sampler.literal_sign"] is True
    assert cfg["lowpass.factor"] == 4
    assert cfg["paths.score"] == "model"
    assert cfg.sampler().mode == "sdedit"
    assert cfg.energies(3, 32).lowpass.factor == 4


def test_negative_lambda_names_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("seed = 1\nenergy.lambda_g = -1\n")
    assert exc.value.line == 2
    assert "nonnegative" in str(exc.value)


@pytest.mark.parametrize("text,line", [
    ("bogus = 1\n", 1),
    ("seed = 1\nseed = 2\n", 2),
    ("seed = x\n", 1),
    ("\nno equals sign\n", 2),
    ("energy.similarity = cosine\n", 1),
    ("sampler.mode = ddim\n", 1),
    ("sampler.m_frac = 1.5\n", 1),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_round_trip(tmp_path):
    cfg = parse_config_text("energy.lambda_g = 0.05\nsampler.stage2_m_frac = 0.2\n"
                            "paths.sketch = a b.pgm\nscore.backend = gmm\n")
    write_config(tmp_path / "c.cfg", cfg)
    again = parse_config(tmp_path / "c.cfg")
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_digest_changes_iff_field_changes():
    base = RunConfig()
    assert base.digest() == RunConfig().digest()
    for key, val in [("seed", 1), ("energy.lambda_g", 0.2), ("sampler.k", 2),
                     ("paths.score", "x"), ("sampler.stage2_steps", 10)]:
        assert base.with_values(**{key.replace(".", "__"): val}).digest() != base.digest()
    assert base.with_values(seed=0).digest() == base.digest()
    with pytest.raises(ConfigError):
        base.with_values(bogus=1)
