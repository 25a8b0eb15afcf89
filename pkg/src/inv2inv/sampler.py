"""Euler-Maruyama reverse-SDE sampling with energy guidance.

All entry points take images as ``(C, H, W)`` or batches ``(B, C, H, W)`` and
an ``rng`` that is either one master seed or one seed per batch element.
Each trajectory draws its noise from its own counter-based streams (see
:mod:`inv2inv.rng`), split by stage and purpose, so switching an energy term
off never shifts the noise seen by the rest of the run.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .energy import (EnergySuite, EnergyWeights, as_batch, grad_appearance_energy,
                     grad_shape_energy, s_a, s_g, sketch_to_image)
from .errors import ConfigError, DomainError, SamplingError, ShapeError
from .rng import BatchNoise, CounterStream, Purpose, as_seeds, stream_id
from .score import ScoreModel
from .sde import SdeSchedule

MODES = ("two_stage", "variant1", "variant2", "sdedit")
MODE_ALIASES = {
    "variant1_direct_full_control": "variant1",
    "variant2_mixup": "variant2",
    "unguided_sdedit": "sdedit",
}


def canonical_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ConfigError(f"unknown sampler mode {mode!r}; choose from {', '.join(MODES)}")
    return mode


@dataclass(frozen=True)
class SamplerConfig:
    m_frac: float = 0.4
    steps: int = 200
    k: int = 1
    weights: EnergyWeights = field(default_factory=EnergyWeights)
    seed: int = 0
    mode: str = "two_stage"
    mixup_ratio: float = 0.7
    # stage-2 overrides; None means "same as stage 1"
    stage2_m_frac: float | None = None
    stage2_steps: int | None = None
    # subtract the appearance gradient in stage 2 instead of adding it
    literal_sign: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        for m in (self.m_frac, self.stage2_m_frac):
            if m is not None and not (0 < m <= 1):
                raise ConfigError(f"m_frac must lie in (0, 1], got {m}")
        for n in (self.steps, self.stage2_steps):
            if n is not None and n < 1:
                raise ConfigError(f"step count must be >= 1, got {n}")
        if self.k < 1:
            raise ConfigError(f"repeat count k must be >= 1, got {self.k}")
        if not 0 <= self.mixup_ratio <= 1:
            raise ConfigError(f"mixup_ratio must lie in [0, 1], got {self.mixup_ratio}")

    def stage(self, index: int) -> tuple[float, int]:
        if index == 2:
            return (self.stage2_m_frac or self.m_frac, self.stage2_steps or self.steps)
        return self.m_frac, self.steps


@dataclass
class RunRecord:
    config: SamplerConfig
    output: np.ndarray
    stage1: np.ndarray | None = None
    timings: dict[str, float] = field(default_factory=dict)
    # stage name -> {"shape": (steps, B), "appearance": (steps, B)}
    traces: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


def reverse_step(sched: SdeSchedule, score: ScoreModel, y: np.ndarray, s: float, h: float,
                 guidance: np.ndarray | None, z: np.ndarray | None) -> np.ndarray:
    """One Euler-Maruyama step of the guided reverse SDE from ``s`` to ``s - h``.

    ``y_next = y + [-f(y, s) + g(s)^2 score(y, s) - guidance] h + g(s) sqrt(h) z``
    """
    if s - h < -1e-12 * sched.T:
        raise DomainError(f"reverse step would cross t=0 (s={s}, h={h})")
    g = sched.diffusion(s)
    drift = -sched.drift(y, s) + g * g * score(y, s)
    if guidance is not None:
        drift = drift - guidance
    y_next = y + drift * h
    if z is not None:
        y_next = y_next + g * np.sqrt(h) * z
    return y_next


GuidanceFn = Callable[[np.ndarray, float], np.ndarray | None]


def _reverse_chain(sched: SdeSchedule, score: ScoreModel, y: np.ndarray, m_frac: float,
                   steps: int, k: int, noise: BatchNoise, guidance: GuidanceFn | None,
                   stage_name: str, tracer: Callable[[np.ndarray, float], None] | None = None):
    M = m_frac * sched.T
    h = M / steps
    shape = y.shape[1:]
    for i in range(steps, 0, -1):
        s = i * h
        for rep in range(k):
            if tracer is not None and rep == 0:
                tracer(y, s)
            gvec = guidance(y, s) if guidance is not None else None
            z = noise.normal(Purpose.STEP, shape) if i > 1 else None
            y = reverse_step(sched, score, y, s, h, gvec, z)
            if rep < k - 1:
                a, sd = sched.transition(max(s - h, 0.0), s)
                y = a * y + sd * noise.normal(Purpose.REPEAT, shape)
        if not np.all(np.isfinite(y)):
            raise SamplingError(stage_name, i)
    return y


def _prepare(x, rng) -> tuple[np.ndarray, list[int], bool]:
    xb, single = as_batch(x)
    seeds = as_seeds(rng)
    if len(seeds) == 1 and xb.shape[0] > 1:
        seeds = [seeds[0] + b for b in range(xb.shape[0])]
    if len(seeds) != xb.shape[0]:
        if xb.shape[0] == 1:
            xb = np.repeat(xb, len(seeds), axis=0)
        else:
            raise ShapeError(f"{len(seeds)} seeds for a batch of {xb.shape[0]}")
    return xb, seeds, single and len(seeds) == 1


def _match_batch(x, B: int) -> np.ndarray:
    xb, _ = as_batch(x)
    if xb.shape[0] == B:
        return xb
    if xb.shape[0] == 1:
        return np.repeat(xb, B, axis=0)
    raise ShapeError(f"batch of {xb.shape[0]} does not match {B} trajectories")


def _start(sched: SdeSchedule, x: np.ndarray, m_frac: float, noise: BatchNoise) -> np.ndarray:
    return sched.perturb(x, m_frac * sched.T, noise.normal(Purpose.INIT, x.shape[1:]))


def _finish(y: np.ndarray, single: bool) -> np.ndarray:
    y = np.clip(y, -1.0, 1.0)
    return y[0] if single else y


class _Tracer:
    def __init__(self, energies: EnergySuite, x_sk: np.ndarray, x_ex: np.ndarray | None):
        self.energies = energies
        self.x_sk = x_sk
        self.x_ex = x_ex
        self.shape: list[np.ndarray] = []
        self.appearance: list[np.ndarray] = []

    def __call__(self, y, s):
        e = self.energies
        self.shape.append(np.atleast_1d(s_g(e.edge, y, self.x_sk, e.similarity)))
        if self.x_ex is not None:
            self.appearance.append(np.atleast_1d(s_a(e.lowpass, e.pyramid, y, self.x_ex)))

    def result(self) -> dict[str, np.ndarray]:
        out = {"shape": np.array(self.shape)}
        if self.appearance:
            out["appearance"] = np.array(self.appearance)
        return out


def unguided_sdedit(x, score: ScoreModel, sched: SdeSchedule, cfg: SamplerConfig, rng,
                    stage: int = 1) -> np.ndarray:
    """Partial inversion of image ``x`` with zero guidance, using ``stage``'s streams."""
    xb, seeds, single = _prepare(x, rng)
    noise = BatchNoise(seeds, stage)
    m_frac, steps = cfg.stage(stage)
    y = _start(sched, xb, m_frac, noise)
    y = _reverse_chain(sched, score, y, m_frac, steps, cfg.k, noise, None, f"stage {stage}")
    return _finish(y, single)


class _SharedNoise:
    """All trajectories from one stream per purpose; fast for large point clouds."""

    def __init__(self, seed: int, batch: int):
        self.seed = int(seed)
        self.batch = batch
        self._streams: dict[int, CounterStream] = {}

    def normal(self, purpose: Purpose, shape: tuple[int, ...]) -> np.ndarray:
        if purpose not in self._streams:
            self._streams[purpose] = CounterStream(self.seed, stream_id(purpose, 0))
        return self._streams[purpose].normal((self.batch,) + tuple(shape))


def sample_from_noise(score: ScoreModel, sched: SdeSchedule, count: int,
                      event_shape: tuple[int, ...], steps: int, seed: int = 0,
                      k: int = 1) -> np.ndarray:
    """Unguided reverse SDE from ``N(0, I)`` at ``T`` down to 0, unclamped.

    Used for distribution-recovery checks on oracle scores, so it accepts any
    event shape (e.g. ``(2,)`` points).  Draws come from one stream shared by
    the whole batch, so results depend on ``count``.
    """
    noise = _SharedNoise(seed, count)
    y = noise.normal(Purpose.INIT, event_shape)
    return _reverse_chain(sched, score, y, 1.0, steps, k, noise, None, "prior sampling")


def shape_enhancing_inversion(x_sk, score: ScoreModel, sched: SdeSchedule, energies: EnergySuite,
                              cfg: SamplerConfig, rng, channels: int = 3,
                              traces: dict | None = None) -> np.ndarray:
    """Stage 1: noised sketch, denoised under the shape energy only."""
    skb, seeds, single = _prepare(x_sk, rng)
    if skb.shape[1] != 1:
        raise ShapeError("sketch must have exactly one channel")
    noise = BatchNoise(seeds, 1)
    m_frac, steps = cfg.stage(1)
    w = EnergyWeights(cfg.weights.lambda_g, 0.0)
    sk_shape = skb.shape[1:]

    def guidance(y, s):
        if w.lambda_g == 0:
            return None
        return grad_shape_energy(energies.edge, w, sched, y, skb, s,
                                 noise.normal(Purpose.SKETCH, sk_shape), energies.similarity)

    tracer = _Tracer(energies, skb, None) if traces is not None else None
    y = _start(sched, sketch_to_image(skb, channels), m_frac, noise)
    y = _reverse_chain(sched, score, y, m_frac, steps, cfg.k, noise, guidance, "stage 1", tracer)
    if tracer is not None:
        traces["stage1"] = tracer.result()
    return _finish(y, single)


def full_control_inversion(y_init, x_sk, x_ex, score: ScoreModel, sched: SdeSchedule,
                           energies: EnergySuite, cfg: SamplerConfig, rng,
                           traces: dict | None = None) -> np.ndarray:
    """Stage 2: noised ``y_init``, denoised under shape plus appearance energies."""
    yb, seeds, single = _prepare(y_init, rng)
    B = yb.shape[0]
    skb = _match_batch(x_sk, B)
    exb = _match_batch(x_ex, B)
    if exb.shape[1:] != yb.shape[1:]:
        raise ShapeError(f"exemplar shape {exb.shape[1:]} != image shape {yb.shape[1:]}")
    noise = BatchNoise(seeds, 2)
    m_frac, steps = cfg.stage(2)
    w = cfg.weights
    sign = -1.0 if cfg.literal_sign else 1.0

    def guidance(y, s):
        g = None
        if w.lambda_g > 0:
            g = grad_shape_energy(energies.edge, w, sched, y, skb, s,
                                  noise.normal(Purpose.SKETCH, skb.shape[1:]), energies.similarity)
        if w.lambda_a > 0:
            ga = grad_appearance_energy(energies.lowpass, energies.pyramid, w, sched, y, exb, s,
                                        noise.normal(Purpose.EXEMPLAR, exb.shape[1:]))
            g = sign * ga if g is None else g + sign * ga
        return g

    tracer = _Tracer(energies, skb, exb) if traces is not None else None
    y = _start(sched, yb, m_frac, noise)
    y = _reverse_chain(sched, score, y, m_frac, steps, cfg.k, noise, guidance, "stage 2", tracer)
    if tracer is not None:
        traces["stage2"] = tracer.result()
    return _finish(y, single)


def inversion_by_inversion(x_sk, x_ex, score: ScoreModel, sched: SdeSchedule,
                           energies: EnergySuite, cfg: SamplerConfig, rng=None,
                           trace: bool = False) -> RunRecord:
    """Shape-enhancing inversion followed by full-control inversion."""
    rng = cfg.seed if rng is None else rng
    traces: dict | None = {} if trace else None
    channels = as_batch(x_ex)[0].shape[1]
    t0 = time.perf_counter()
    y1 = shape_enhancing_inversion(x_sk, score, sched, energies, cfg, rng, channels, traces)
    t1 = time.perf_counter()
    out = full_control_inversion(y1, x_sk, x_ex, score, sched, energies, cfg, rng, traces)
    t2 = time.perf_counter()
    return RunRecord(cfg, out, y1, {"stage1": t1 - t0, "stage2": t2 - t1}, traces or {})


def mixup(sketch_image: np.ndarray, exemplar: np.ndarray, ratio: float) -> np.ndarray:
    """``ratio * sketch + (1 - ratio) * exemplar`` (0.7 is the "Mixup 1" blend)."""
    return ratio * sketch_image + (1.0 - ratio) * exemplar


def run_variant(x_sk, x_ex, score: ScoreModel, sched: SdeSchedule, energies: EnergySuite,
                cfg: SamplerConfig, rng=None, trace: bool = False) -> RunRecord:
    """Dispatch on ``cfg.mode``.

    ``variant1`` and ``variant2`` run only the full-control stage, started from
    the sketch image or the sketch/exemplar blend; ``sdedit`` runs one unguided
    stage from the sketch image and ignores the exemplar.
    """
    rng = cfg.seed if rng is None else rng
    mode = cfg.mode
    if mode == "two_stage":
        return inversion_by_inversion(x_sk, x_ex, score, sched, energies, cfg, rng, trace)
    channels = as_batch(x_ex)[0].shape[1]
    sk_img = sketch_to_image(x_sk, channels)
    traces: dict | None = {} if trace else None
    t0 = time.perf_counter()
    if mode == "sdedit":
        out = unguided_sdedit(sk_img, score, sched, cfg, rng, stage=1)
        key = "stage1"
    else:
        start = sk_img if mode == "variant1" else mixup(sk_img, np.asarray(x_ex), cfg.mixup_ratio)
        out = full_control_inversion(start, x_sk, x_ex, score, sched, energies, cfg, rng, traces)
        key = "stage2"
    return RunRecord(cfg, out, None, {key: time.perf_counter() - t0}, traces or {})


def config_as_dict(cfg: SamplerConfig) -> dict:
    d = asdict(cfg)
    w = d.pop("weights")
    d["lambda_g"], d["lambda_a"] = w["lambda_g"], w["lambda_a"]
    return d


def with_weights(cfg: SamplerConfig, lambda_g: float | None = None,
                 lambda_a: float | None = None) -> SamplerConfig:
    w = cfg.weights
    return replace(cfg, weights=EnergyWeights(
        w.lambda_g if lambda_g is None else lambda_g,
        w.lambda_a if lambda_a is None else lambda_a))
