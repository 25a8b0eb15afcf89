"""Shape and appearance energies with closed-form gradients.

Images are ``(C, H, W)`` arrays or batches ``(B, C, H, W)``; every function
accepts either and returns the same layout it was given.  Sketches use the
single-channel ``[0, 1]`` convention produced by :meth:`EdgeExtractor.sketch`
(1 is blank paper, 0 is a stroke).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError
from .rng import CounterStream, Purpose, stream_id
from .sde import SdeSchedule

LUMA = np.array([0.299, 0.587, 0.114])


def as_batch(y) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3:
        return y[None], True
    if y.ndim == 4:
        return y, False
    raise ShapeError(f"expected (C,H,W) or (B,C,H,W), got shape {y.shape}")


def _restore(y: np.ndarray, single: bool) -> np.ndarray:
    return y[0] if single else y


def sketch_to_image(sketch, channels: int = 3) -> np.ndarray:
    """Lift a ``[0, 1]`` sketch into image space: strokes -1, paper +1."""
    s, single = as_batch(sketch)
    img = np.repeat(2.0 * s[:, :1] - 1.0, channels, axis=1)
    return _restore(img, single)


def image_to_sketch(image) -> np.ndarray:
    """Inverse of :func:`sketch_to_image` (channel mean, then affine map)."""
    x, single = as_batch(image)
    return _restore(0.5 * (x.mean(axis=1, keepdims=True) + 1.0), single)


@dataclass(frozen=True)
class EdgeExtractor:
    """Sobel edge magnitude turned into a dark-on-white sketch.

    ``sketch(y) = 1 - m / max(m)`` with ``m = sqrt(gx^2 + gy^2 + eps)`` taken
    on the luminance of ``y``.  A constant image gives an all-ones sketch.
    """

    eps: float = 1e-6

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("edge epsilon must be positive")

    @staticmethod
    def luminance(y: np.ndarray) -> np.ndarray:
        C = y.shape[1]
        if C == 1:
            return y[:, 0]
        if C == 3:
            return np.tensordot(LUMA, y, axes=([0], [1]))
        return y.mean(axis=1)

    @staticmethod
    def _luminance_adjoint(u: np.ndarray, C: int) -> np.ndarray:
        if C == 1:
            return u[:, None]
        w = LUMA if C == 3 else np.full(C, 1.0 / C)
        return w[None, :, None, None] * u[:, None]

    def _forward(self, y: np.ndarray):
        if y.shape[2] < 3 or y.shape[3] < 3:
            raise ShapeError("edge extractor needs H, W >= 3")
        gx, gy = kernels.sobel(self.luminance(y))
        m = np.sqrt(gx * gx + gy * gy + self.eps)
        B = m.shape[0]
        flat = m.reshape(B, -1)
        k = flat.argmax(axis=1)
        mmax = flat[np.arange(B), k]
        flat_mask = mmax <= np.sqrt(self.eps) * (1.0 + 1e-9)
        return gx, gy, m, k, mmax, flat_mask

    def sketch(self, y) -> np.ndarray:
        yb, single = as_batch(y)
        _, _, m, _, mmax, flat = self._forward(yb)
        out = 1.0 - m / mmax[:, None, None]
        out[flat] = 1.0
        return _restore(out[:, None], single)

    def sketch_vjp(self, y, cotangent) -> np.ndarray:
        """Pull a cotangent on the sketch back to the image."""
        yb, single = as_batch(y)
        ub, _ = as_batch(cotangent)
        gx, gy, m, k, mmax, flat = self._forward(yb)
        B, C, H, W = yb.shape
        u = ub[:, 0]
        # d sketch_i / d m_j = -delta_ij / M + delta_{j,argmax} m_i / M^2
        um = -u / mmax[:, None, None]
        corr = np.einsum("bhw,bhw->b", u, m) / (mmax * mmax)
        um.reshape(B, -1)[np.arange(B), k] += corr
        um[flat] = 0.0
        lum_bar = kernels.sobel_adjoint(um * gx / m, um * gy / m)
        return _restore(self._luminance_adjoint(lum_bar, C), single)


@dataclass(frozen=True)
class LowPass:
    """Block-mean projection: average-pool by ``factor`` then nearest upsample."""

    factor: int

    def __post_init__(self):
        if self.factor < 1:
            raise DomainError("low-pass factor must be >= 1")

    @staticmethod
    def for_size(height: int) -> "LowPass":
        """Factor 64 at 256 px, scaled linearly with resolution (minimum 2)."""
        return LowPass(max(2, int(round(64 * height / 256))))

    def __call__(self, y) -> np.ndarray:
        yb, single = as_batch(y)
        B, C, H, W = yb.shape
        f = self.factor
        if H % f or W % f:
            raise ShapeError(f"image {H}x{W} not divisible by low-pass factor {f}")
        means = yb.reshape(B, C, H // f, f, W // f, f).mean(axis=(3, 5))
        out = np.repeat(np.repeat(means, f, axis=2), f, axis=3)
        return _restore(out, single)

    def adjoint(self, u) -> np.ndarray:
        # orthogonal projection: self-adjoint
        return self(u)


def _pool2(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    return x.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))


def _pool2_adjoint(u: np.ndarray) -> np.ndarray:
    return 0.25 * np.repeat(np.repeat(u, 2, axis=2), 2, axis=3)


@dataclass(frozen=True)
class FeaturePyramid:
    """Frozen random convolution pyramid.

    Level ``l`` applies a 3x3 bank of ``channels`` filters (zero padding) and a
    2x average pool to level ``l-1``.  Weights are unit normals from the
    ``PYRAMID`` stream of ``seed``, divided by ``sqrt(fan_in)``.
    """

    seed: int = 0
    levels: int = 2
    channels: int = 8
    in_channels: int = 3
    weights: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        stream = CounterStream(self.seed, stream_id(Purpose.PYRAMID))
        ws = []
        c_in = self.in_channels
        for _ in range(self.levels):
            w = stream.normal((self.channels, c_in, 3, 3)) / np.sqrt(9.0 * c_in)
            w.setflags(write=False)
            ws.append(w)
            c_in = self.channels
        object.__setattr__(self, "weights", tuple(ws))

    def _check(self, y: np.ndarray):
        B, C, H, W = y.shape
        if C != self.in_channels:
            raise ShapeError(f"pyramid built for {self.in_channels} channels, got {C}")
        d = 2**self.levels
        if H % d or W % d:
            raise ShapeError(f"image {H}x{W} not divisible by {d}")

    def features(self, y) -> list[np.ndarray]:
        yb, single = as_batch(y)
        self._check(yb)
        feats = []
        x = yb
        for w in self.weights:
            x = _pool2(kernels.conv3x3(x, w))
            feats.append(x)
        return [_restore(f, single) for f in feats]

    def level_adjoint(self, level: int, u) -> np.ndarray:
        """Adjoint of the map image -> features at ``level`` (1-based)."""
        ub, single = as_batch(u)
        x = ub
        for w in reversed(self.weights[:level]):
            x = kernels.conv3x3_adjoint(_pool2_adjoint(x), w)
        return _restore(x, single)

    def adjoint(self, cotangents: Sequence[np.ndarray]) -> np.ndarray:
        """Adjoint of :meth:`features` applied to one cotangent per level."""
        cots = [as_batch(c) for c in cotangents]
        single = cots[0][1]
        acc = None
        for lvl in range(self.levels, 0, -1):
            u = cots[lvl - 1][0] if acc is None else acc + cots[lvl - 1][0]
            acc = kernels.conv3x3_adjoint(_pool2_adjoint(u), self.weights[lvl - 1])
        return _restore(acc, single)


@dataclass(frozen=True)
class EnergyWeights:
    lambda_g: float = 0.1
    lambda_a: float = 2.0

    def __post_init__(self):
        if not (self.lambda_g >= 0 and self.lambda_a >= 0):
            raise DomainError(f"energy weights must be nonnegative, got {self}")


@dataclass(frozen=True)
class EnergySuite:
    """Extractors shared by both energies.  ``similarity`` applies to the shape term."""

    edge: EdgeExtractor
    lowpass: LowPass
    pyramid: FeaturePyramid
    similarity: str = "l2"

    def __post_init__(self):
        if self.similarity not in ("l2", "l1"):
            raise DomainError(f"similarity must be 'l2' or 'l1', got {self.similarity!r}")

    @classmethod
    def for_image(cls, channels: int, height: int, *, pyramid_seed: int = 0,
                  lowpass_factor: int | None = None, similarity: str = "l2",
                  eps: float = 1e-6) -> "EnergySuite":
        lp = LowPass(lowpass_factor) if lowpass_factor else LowPass.for_size(height)
        return cls(EdgeExtractor(eps), lp, FeaturePyramid(seed=pyramid_seed, in_channels=channels),
                   similarity)


def _per_sample_sum(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1).sum(axis=1)


def _check_sketch_pair(y: np.ndarray, sk: np.ndarray):
    if sk.shape[0] not in (1, y.shape[0]) or sk.shape[1] != 1 or sk.shape[2:] != y.shape[2:]:
        raise ShapeError(f"sketch shape {sk.shape} incompatible with image shape {y.shape}")


def s_g(ext: EdgeExtractor, y, x_sk_t, similarity: str = "l2"):
    """Squared L2 (or L1) distance between the sketch of ``y`` and ``x_sk_t``."""
    yb, single = as_batch(y)
    sk, _ = as_batch(x_sk_t)
    _check_sketch_pair(yb, sk)
    d = ext.sketch(yb) - sk
    val = _per_sample_sum(d * d if similarity == "l2" else np.abs(d))
    return float(val[0]) if single else val


def s_a(lp: LowPass, fp: FeaturePyramid, y, x_ex_t):
    """Block-mean colour distance plus feature-pyramid distance."""
    yb, single = as_batch(y)
    xb, _ = as_batch(x_ex_t)
    if xb.shape[1:] != yb.shape[1:]:
        raise ShapeError(f"exemplar shape {xb.shape} != image shape {yb.shape}")
    d = yb - xb
    o = lp(d)
    val = _per_sample_sum(o * o)
    for f in fp.features(d):
        val = val + _per_sample_sum(f * f)
    return float(val[0]) if single else val


def shape_similarity_grad(ext: EdgeExtractor, y, x_sk_t, similarity: str = "l2") -> np.ndarray:
    yb, single = as_batch(y)
    sk, _ = as_batch(x_sk_t)
    _check_sketch_pair(yb, sk)
    d = ext.sketch(yb) - sk
    u = 2.0 * d if similarity == "l2" else np.sign(d)
    return _restore(ext.sketch_vjp(yb, u), single)


def appearance_similarity_grad(lp: LowPass, fp: FeaturePyramid, y, x_ex_t) -> np.ndarray:
    yb, single = as_batch(y)
    xb, _ = as_batch(x_ex_t)
    if xb.shape[1:] != yb.shape[1:]:
        raise ShapeError(f"exemplar shape {xb.shape} != image shape {yb.shape}")
    d = yb - xb
    g = 2.0 * lp.adjoint(lp(d))
    g = g + 2.0 * fp.adjoint(fp.features(d))
    return _restore(g, single)


def grad_shape_energy(ext: EdgeExtractor, w: EnergyWeights, sched: SdeSchedule, y, x_sk_0,
                      t: float, noise, similarity: str = "l2") -> np.ndarray:
    """``lambda_g * grad_y S_g(y, x_sk_t)`` with ``x_sk_t`` perturbed by ``noise``."""
    y = np.asarray(y, dtype=np.float64)
    x_sk_t = sched.perturb(np.broadcast_to(x_sk_0, np.shape(noise)), t, noise)
    if w.lambda_g == 0:
        return np.zeros_like(y)
    return w.lambda_g * shape_similarity_grad(ext, y, x_sk_t, similarity)


def grad_appearance_energy(lp: LowPass, fp: FeaturePyramid, w: EnergyWeights, sched: SdeSchedule,
                           y, x_ex_0, t: float, noise) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    x_ex_t = sched.perturb(np.broadcast_to(x_ex_0, np.shape(noise)), t, noise)
    if w.lambda_a == 0:
        return np.zeros_like(y)
    return w.lambda_a * appearance_similarity_grad(lp, fp, y, x_ex_t)


def finite_diff_gradient(f: Callable[[np.ndarray], float], y, step: float = 1e-5,
                         coords: Sequence[tuple[int, ...]] | None = None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``y``.

    With ``coords`` only those entries are differenced and the rest of the
    returned array is NaN.
    """
    if not step > 0:
        raise DomainError("finite-difference step must be positive")
    y = np.array(y, dtype=np.float64)
    if coords is None:
        coords = list(np.ndindex(y.shape))
        out = np.zeros_like(y)
    else:
        out = np.full_like(y, np.nan)
    for idx in coords:
        idx = tuple(idx)
        orig = y[idx]
        y[idx] = orig + step
        fp = f(y)
        y[idx] = orig - step
        fm = f(y)
        y[idx] = orig
        out[idx] = (fp - fm) / (2.0 * step)
    return out
