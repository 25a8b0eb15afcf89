import numpy as np
import pytest

from inv2inv import sampler as smp
from inv2inv.energy import EnergySuite, sketch_to_image
from inv2inv.errors import ConfigError, DomainError, SamplingError
from inv2inv.metrics import gmm_recovery_stats, sliced_wasserstein
from inv2inv.rng import CounterStream, Purpose
from inv2inv.sampler import (SamplerConfig, full_control_inversion, inversion_by_inversion,
                             mixup, reverse_step, run_variant, sample_from_noise,
                             shape_enhancing_inversion, unguided_sdedit, with_weights)
from inv2inv.score import GaussianMixture, GmmScore
from inv2inv.sde import SdeSchedule

SCHED = SdeSchedule()
UNIT1 = GmmScore(GaussianMixture([1.0], [[0.0]], [1.0]), SCHED)
E16 = EnergySuite.for_image(3, 16)


class ToyScore:
    """Cheap image score: pulls towards a fixed mid-grey image."""

    def __call__(self, y, t):
        a, s = SCHED.alpha_sigma(t)
        return -(y - 0.2 * a) / (0.3 * a * a + s * s)


@pytest.fixture(scope="module")
def pair():
    st = CounterStream(21, 80)
    sk = np.ones((1, 16, 16))
    sk[0, 4:12, 4] = sk[0, 4:12, 11] = sk[0, 4, 4:12] = sk[0, 11, 4:12] = 0.0
    ex = np.clip(st.normal((3, 16, 16)) * 0.3, -1, 1)
    return sk, ex


FAST = SamplerConfig(steps=12)


def test_reverse_step_by_hand():
    s = (1.0 - SCHED.beta_min) / (SCHED.beta_max - SCHED.beta_min)  # beta(s) = 1
    y = np.array([[2.0]])
    out = reverse_step(SCHED, UNIT1, y, s, 0.01, None, None)
    assert out[0, 0] == pytest.approx(1.99, abs=1e-12)
    zero = reverse_step(SCHED, UNIT1, y, s, 0.01, np.zeros_like(y), None)
    np.testing.assert_array_equal(out, zero)


def test_reverse_step_time_underflow():
    with pytest.raises(DomainError):
        reverse_step(SCHED, UNIT1, np.zeros((1, 1)), 0.01, 0.02, None, None)


def test_last_step_is_noise_free(monkeypatch):
    calls = []
    orig = smp.BatchNoise.normal

    def spy(self, purpose, shape):
        calls.append(purpose)
        return orig(self, purpose, shape)

    monkeypatch.setattr(smp.BatchNoise, "normal", spy)
    unguided_sdedit(np.zeros((1, 4, 4)), ToyScore(), SCHED, SamplerConfig(steps=7), 3)
    assert calls.count(Purpose.INIT) == 1
    assert calls.count(Purpose.STEP) == 6


def test_repeats_draw_fresh_noise(monkeypatch):
    calls = []
    orig = smp.BatchNoise.normal
    monkeypatch.setattr(smp.BatchNoise, "normal",
                        lambda self, p, s: calls.append(p) or orig(self, p, s))
    unguided_sdedit(np.zeros((1, 4, 4)), ToyScore(), SCHED, SamplerConfig(steps=5, k=3), 3)
    assert calls.count(Purpose.REPEAT) == 5 * 2
    assert calls.count(Purpose.STEP) == 4 * 3


def test_shape_stage_without_guidance_is_sdedit(pair):
    sk, _ = pair
    cfg = with_weights(FAST, lambda_g=0.0)
    a = shape_enhancing_inversion(sk, ToyScore(), SCHED, E16, cfg, 5)
    b = unguided_sdedit(sketch_to_image(sk, 3), ToyScore(), SCHED, cfg, 5, stage=1)
    np.testing.assert_array_equal(a, b)


def test_two_stage_without_guidance_is_double_sdedit(pair):
    sk, ex = pair
    cfg = with_weights(FAST, 0.0, 0.0)
    rec = inversion_by_inversion(sk, ex, ToyScore(), SCHED, E16, cfg, 8)
    y1 = unguided_sdedit(sketch_to_image(sk, 3), ToyScore(), SCHED, cfg, 8, stage=1)
    y2 = unguided_sdedit(y1, ToyScore(), SCHED, cfg, 8, stage=2)
    np.testing.assert_array_equal(rec.stage1, y1)
    np.testing.assert_array_equal(rec.output, y2)


def test_zero_appearance_weight_removes_only_that_term(pair):
    sk, ex = pair
    y1 = np.zeros((3, 16, 16))
    cfg = with_weights(FAST, 0.1, 0.0)
    a = full_control_inversion(y1, sk, ex, ToyScore(), SCHED, E16, cfg, 4)
    b = full_control_inversion(y1, sk, np.zeros_like(ex), ToyScore(), SCHED, E16, cfg, 4)
    np.testing.assert_array_equal(a, b)


def test_variant2_full_ratio_is_variant1(pair):
    sk, ex = pair
    v1 = run_variant(sk, ex, ToyScore(), SCHED, E16, SamplerConfig(steps=12, mode="variant1"), 2)
    v2 = run_variant(sk, ex, ToyScore(), SCHED, E16,
                     SamplerConfig(steps=12, mode="variant2", mixup_ratio=1.0), 2)
    np.testing.assert_array_equal(v1.output, v2.output)


def test_mixup_blend():
    a, b = np.ones((3, 2, 2)), -np.ones((3, 2, 2))
    np.testing.assert_allclose(mixup(a, b, 0.7), 0.4)


def test_record_stage1_matches_standalone(pair):
    sk, ex = pair
    rec = inversion_by_inversion(sk, ex, ToyScore(), SCHED, E16, FAST, 11)
    alone = shape_enhancing_inversion(sk, ToyScore(), SCHED, E16, FAST, 11)
    np.testing.assert_array_equal(rec.stage1, alone)
    assert set(rec.timings) == {"stage1", "stage2"}


@pytest.mark.parametrize("mode", ["two_stage", "variant1", "variant2", "sdedit"])
def test_modes_deterministic_and_clamped(mode, pair):
    sk, ex = pair
    cfg = SamplerConfig(steps=10, mode=mode)
    a = run_variant(sk, ex, ToyScore(), SCHED, E16, cfg, 3)
    b = run_variant(sk, ex, ToyScore(), SCHED, E16, cfg, 3)
    np.testing.assert_array_equal(a.output, b.output)
    assert a.output.shape == (3, 16, 16)
    assert a.output.min() >= -1.0 and a.output.max() <= 1.0
    c = run_variant(sk, ex, ToyScore(), SCHED, E16, cfg, 4)
    assert not np.array_equal(a.output, c.output)


def test_batched_seeds_match_single_runs(pair):
    sk, ex = pair
    batch = run_variant(np.stack([sk, sk]), np.stack([ex, ex]), ToyScore(), SCHED, E16, FAST,
                        [7, 9]).output
    np.testing.assert_allclose(batch[1], run_variant(sk, ex, ToyScore(), SCHED, E16, FAST,
                                                     9).output, atol=1e-13)


def test_literal_sign_switch_changes_stage2(pair):
    sk, ex = pair
    a = run_variant(sk, ex, ToyScore(), SCHED, E16, FAST, 1).output
    b = run_variant(sk, ex, ToyScore(), SCHED, E16, SamplerConfig(steps=12, literal_sign=True),
                    1).output
    assert not np.array_equal(a, b)


def test_stage2_overrides():
    cfg = SamplerConfig(m_frac=0.4, steps=100, stage2_m_frac=0.2, stage2_steps=50)
    assert cfg.stage(1) == (0.4, 100)
    assert cfg.stage(2) == (0.2, 50)
    assert SamplerConfig().stage(2) == (0.4, 200)


def test_trace_records_each_step(pair):
    sk, ex = pair
    rec = run_variant(sk, ex, ToyScore(), SCHED, E16, FAST, 1, trace=True)
    assert rec.traces["stage1"]["shape"].shape == (12, 1)
    assert rec.traces["stage2"]["appearance"].shape == (12, 1)
    assert "appearance" not in rec.traces["stage1"]


def test_nan_aborts_with_step():
    class Broken:
        def __call__(self, y, t):
            return np.full_like(y, np.nan) if t < 0.2 else -y

    with pytest.raises(SamplingError) as exc:
        unguided_sdedit(np.zeros((1, 4, 4)), Broken(), SCHED, SamplerConfig(steps=10), 0)
    assert exc.value.step == 4


@pytest.mark.parametrize("kwargs", [dict(steps=0), dict(k=0), dict(m_frac=0.0),
                                    dict(m_frac=1.5), dict(mixup_ratio=1.2), dict(mode="ddim")])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SamplerConfig(**kwargs)


def test_mode_aliases():
    assert SamplerConfig(mode="variant1_direct_full_control").mode == "variant1"
    assert SamplerConfig(mode="unguided_sdedit").mode == "sdedit"


# --- distribution recovery ------------------------------------------------

def test_unit_gaussian_recovery():
    score = GmmScore(GaussianMixture([1.0], [[0.0, 0.0]], [1.0]), SCHED)
    x = sample_from_noise(score, SCHED, 10_000, (2,), 500, seed=3)
    assert np.all(np.abs(x.mean(axis=0)) <= 0.02)
    np.testing.assert_allclose(np.cov(x.T), np.eye(2), atol=0.03)


def test_sdedit_from_full_noise_recovers_mixture():
    # components kept inside [-1, 1] so the output clamp never bites
    gm = GaussianMixture([0.5, 0.3, 0.2], [[-0.5, 0.0], [0.5, 0.0], [0.0, 0.6]], [0.01] * 3)
    cfg = SamplerConfig(m_frac=1.0, steps=200)
    out = unguided_sdedit(np.zeros((2, 1, 1)), GmmScore(gm, SCHED), SCHED, cfg,
                          list(range(10_000)))
    pts = out[:, :, 0, 0]
    assert sliced_wasserstein(pts, gm.sample(10_000, CounterStream(6, 80))) <= 0.05
    assert np.max(np.abs(gmm_recovery_stats(pts, gm).weights - gm.weights)) <= 0.03


def test_step_size_convergence(gmm2d):
    ref = gmm2d.sample(400_000, CounterStream(5, 80))
    errs = [sliced_wasserstein(sample_from_noise(GmmScore(gmm2d, SCHED), SCHED, 100_000, (2,),
                                                 n, seed=1), ref, projections=64)
            for n in (25, 50, 100, 200)]
    for prev, cur in zip(errs, errs[1:]):
        assert cur <= 1.1 * prev
