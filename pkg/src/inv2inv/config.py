"""Line-based ``key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored.  Every key is optional;
missing keys take the defaults in ``DEFAULTS``.  Unknown keys, duplicate keys
and malformed values raise :class:`ConfigError` carrying the line number.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .energy import EnergySuite, EnergyWeights
from .errors import ConfigError
from .sampler import SamplerConfig, canonical_mode
from .sde import SdeSchedule

# key -> (type, default); order here is the serialization order
SCHEMA: dict[str, tuple[type, object]] = {
    "schedule.beta_min": (float, 0.1),
    "schedule.beta_max": (float, 20.0),
    "schedule.T": (float, 1.0),
    "sampler.m_frac": (float, 0.4),
    "sampler.steps": (int, 200),
    "sampler.k": (int, 1),
    "sampler.mode": (str, "two_stage"),
    "sampler.mixup_ratio": (float, 0.7),
    "sampler.stage2_m_frac": (float, None),
    "sampler.stage2_steps": (int, None),
    "sampler.literal_sign": (bool, False),
    "energy.lambda_g": (float, 0.1),
    "energy.lambda_a": (float, 2.0),
    "energy.similarity": (str, "l2"),
    "energy.eps": (float, 1e-6),
    "lowpass.factor": (int, None),
    "pyramid.seed": (int, 0),
    "score.backend": (str, "net"),
    "score.gmm_variance": (float, 0.005),
    "seed": (int, 0),
}
DEFAULTS = {k: d for k, (_, d) in SCHEMA.items()}
PATH_PREFIX = "paths."
_NONE = "none"


def _parse_value(key: str, text: str, line: int | None):
    kind, _ = SCHEMA[key]
    if text.lower() == _NONE and DEFAULTS[key] is None:
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text, 10)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}", line) from None
    return text


def _format_value(value) -> str:
    if value is None:
        return _NONE
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def __getitem__(self, key: str):
        if key.startswith(PATH_PREFIX):
            return self.paths[key[len(PATH_PREFIX):]]
        return self.values[key]

    def validate(self, lines: dict[str, int] | None = None) -> None:
        lines = lines or {}
        v = self.values

        def fail(key, msg):
            raise ConfigError(f"{key}: {msg}", lines.get(key))

        for key in ("energy.lambda_g", "energy.lambda_a"):
            if not v[key] >= 0:
                fail(key, f"must be nonnegative, got {v[key]}")
        if v["energy.similarity"] not in ("l2", "l1"):
            fail("energy.similarity", f"must be l2 or l1, got {v['energy.similarity']!r}")
        if v["score.backend"] not in ("gmm", "net"):
            fail("score.backend", f"must be gmm or net, got {v['score.backend']!r}")
        if not v["score.gmm_variance"] > 0:
            fail("score.gmm_variance", "must be positive")
        if not v["energy.eps"] > 0:
            fail("energy.eps", "must be positive")
        if v["lowpass.factor"] is not None and v["lowpass.factor"] < 1:
            fail("lowpass.factor", "must be >= 1")
        try:
            canonical_mode(v["sampler.mode"])
        except ConfigError as exc:
            fail("sampler.mode", str(exc))
        if not 0 < v["schedule.beta_min"] < v["schedule.beta_max"]:
            fail("schedule.beta_min", "need 0 < beta_min < beta_max")
        if not v["schedule.T"] > 0:
            fail("schedule.T", "must be positive")
        for key in ("sampler.m_frac", "sampler.stage2_m_frac"):
            if v[key] is not None and not 0 < v[key] <= 1:
                fail(key, f"must lie in (0, 1], got {v[key]}")
        for key in ("sampler.steps", "sampler.stage2_steps", "sampler.k"):
            if v[key] is not None and v[key] < 1:
                fail(key, f"must be >= 1, got {v[key]}")
        if not 0 <= v["sampler.mixup_ratio"] <= 1:
            fail("sampler.mixup_ratio", f"must lie in [0, 1], got {v['sampler.mixup_ratio']}")

    def schedule(self) -> SdeSchedule:
        v = self.values
        return SdeSchedule(v["schedule.beta_min"], v["schedule.beta_max"], v["schedule.T"])

    def weights(self) -> EnergyWeights:
        return EnergyWeights(self.values["energy.lambda_g"], self.values["energy.lambda_a"])

    def sampler(self) -> SamplerConfig:
        v = self.values
        return SamplerConfig(
            m_frac=v["sampler.m_frac"], steps=v["sampler.steps"], k=v["sampler.k"],
            weights=self.weights(), seed=v["seed"], mode=v["sampler.mode"],
            mixup_ratio=v["sampler.mixup_ratio"], stage2_m_frac=v["sampler.stage2_m_frac"],
            stage2_steps=v["sampler.stage2_steps"], literal_sign=v["sampler.literal_sign"])

    def energies(self, channels: int, height: int) -> EnergySuite:
        v = self.values
        return EnergySuite.for_image(channels, height, pyramid_seed=v["pyramid.seed"],
                                     lowpass_factor=v["lowpass.factor"],
                                     similarity=v["energy.similarity"], eps=v["energy.eps"])

    def with_values(self, **updates) -> "RunConfig":
        """Copy with dotted keys given as ``sampler__mode="sdedit"`` or via a dict."""
        vals = dict(self.values)
        paths = dict(self.paths)
        for k, val in updates.items():
            key = k.replace("__", ".")
            if key.startswith(PATH_PREFIX):
                paths[key[len(PATH_PREFIX):]] = str(val)
            elif key in SCHEMA:
                vals[key] = val
            else:
                raise ConfigError(f"unknown key {key!r}")
        return replace(self, values=vals, paths=paths)

    def items(self) -> list[tuple[str, str]]:
        out = [(k, _format_value(self.values[k])) for k in SCHEMA]
        out += [(PATH_PREFIX + k, self.paths[k]) for k in sorted(self.paths)]
        return out

    def serialize(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def parse_config_text(text: str) -> RunConfig:
    values = dict(DEFAULTS)
    paths: dict[str, str] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError("empty key", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        if key.startswith(PATH_PREFIX) and len(key) > len(PATH_PREFIX):
            paths[key[len(PATH_PREFIX):]] = val
        elif key in SCHEMA:
            values[key] = _parse_value(key, val, lineno)
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)
    cfg = object.__new__(RunConfig)
    object.__setattr__(cfg, "values", values)
    object.__setattr__(cfg, "paths", paths)
    cfg.validate(seen)
    return cfg


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def write_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(cfg.serialize(), encoding="utf-8")
