"""Counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 generator
(Random123 family) keyed by two 64-bit words ``(seed, stream_id)`` with the
counter starting at zero.  Raw 64-bit outputs are turned into doubles as
``(x >> 11) * 2**-53`` and normals use the Box-Muller transform on consecutive
pairs, so the byte stream is reproducible from the documented recipe alone.

Stream ids are split by :func:`stream_id`::

    stream_id = (stage << 32) | purpose

where ``stage`` is 1 or 2 for the two inversion stages (0 for everything not
tied to a stage) and ``purpose`` is one of the ``Purpose`` codes below.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_POW_M53 = 2.0**-53


class Purpose(enum.IntEnum):
    INIT = 1  # start-point perturbation of a stage
    STEP = 2  # Euler-Maruyama increments
    SKETCH = 3  # perturbed sketch for the shape energy
    EXEMPLAR = 4  # perturbed exemplar for the appearance energy
    REPEAT = 5  # re-perturbation between K repeats
    PARAM_INIT = 16  # network parameter initialisation
    TRAIN_INDEX = 17
    TRAIN_TIME = 18
    TRAIN_NOISE = 19
    PYRAMID = 32  # feature pyramid weights
    DATASET = 48
    PROJECTIONS = 64  # sliced Wasserstein directions
    SAMPLES = 80  # generic test / benchmark draws


def stream_id(purpose: int, stage: int = 0) -> int:
    return ((int(stage) & 0xFFFFFFFF) << 32) | (int(purpose) & 0xFFFFFFFF)


def _box_muller(raw: np.ndarray, n: int) -> np.ndarray:
    """Normals from raw words along the last axis (consecutive pairs)."""
    bits = raw >> np.uint64(11)
    # u1 in (0, 1] keeps the log finite
    u1 = (bits[..., 0::2].astype(np.float64) + 1.0) * _TWO_POW_M53
    u2 = bits[..., 1::2].astype(np.float64) * _TWO_POW_M53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(raw.shape)
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out[..., :n]


class CounterStream:
    """One Philox stream.  Draws advance the counter; nothing else is stateful."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._bitgen = np.random.Philox(key=self.seed | (self.stream << 64))

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(n)

    def uniform(self, shape=()) -> np.ndarray:
        """Doubles in [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
        return u.reshape(shape)

    def normal(self, shape=()) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        return _box_muller(self.raw(2 * ((n + 1) // 2)), n).reshape(shape)

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers in [0, high) by scaling a uniform draw."""
        idx = np.floor(self.uniform((size,)) * high).astype(np.int64)
        return np.minimum(idx, high - 1)


def as_seeds(rng: int | Sequence[int] | np.ndarray) -> list[int]:
    if np.isscalar(rng):
        return [int(rng)]
    return [int(s) for s in rng]


class BatchNoise:
    """Per-trajectory streams for one stage of a batched sampler run.

    Trajectory ``b`` draws only from streams keyed by ``seeds[b]``, so a
    trajectory's noise does not depend on which other trajectories share its
    batch.
    """

    def __init__(self, seeds: Sequence[int], stage: int):
        self.seeds = list(seeds)
        self.stage = stage
        self._streams: dict[int, list[CounterStream]] = {}

    def _get(self, purpose: Purpose) -> list[CounterStream]:
        if purpose not in self._streams:
            sid = stream_id(purpose, self.stage)
            self._streams[purpose] = [CounterStream(s, sid) for s in self.seeds]
        return self._streams[purpose]

    def normal(self, purpose: Purpose, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        words = 2 * ((n + 1) // 2)
        raw = np.stack([g.raw(words) for g in self._get(purpose)])
        return _box_muller(raw, n).reshape((len(self.seeds),) + tuple(shape))
