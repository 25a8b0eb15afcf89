"""Finite-difference and adjoint-identity checks for every analytic derivative.

Relative error of a probe with analytic value ``a`` and numeric value ``n`` is
``|a - n| / max(|a|, |n|, floor)`` where ``floor`` is 1e-3 times the largest
numeric magnitude in the check, so near-zero entries do not dominate.  Adjoint
identities compare ``<A x, u>`` with ``<x, A* u>`` relative to their magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .energy import (EdgeExtractor, FeaturePyramid, LowPass,
                     appearance_similarity_grad, finite_diff_gradient, s_a, s_g,
                     shape_similarity_grad)
from .rng import CounterStream, Purpose, stream_id
from .score import GaussianMixture, ScoreNet
from .sde import SdeSchedule

TOL_SHAPE = 1e-4
TOL_LINEAR = 1e-6
TOL_ADJOINT = 1e-10
TOL_IDEMPOTENT = 1e-12
TOL_DSM = 1e-4
TOL_SCORE = 1e-6


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    probes: int
    failures: list[tuple[tuple[int, ...], float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name:<24} max_rel_err={self.max_error:.3e} "
                f"tol={self.tolerance:.0e} probes={self.probes}")


def _compare(name, analytic, numeric, coords, tol) -> CheckResult:
    a = np.array([analytic[c] for c in coords])
    n = np.array([numeric[c] for c in coords])
    floor = 1e-3 * max(float(np.max(np.abs(n))), 1e-300)
    rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    res = CheckResult(name, float(np.max(rel)), tol, len(coords))
    res.failures = [(tuple(int(i) for i in c), float(x), float(y), float(r))
                    for c, x, y, r in zip(coords, a, n, rel) if not r <= tol]
    return res


def _adjoint_error(ax_u: float, x_atu: float) -> float:
    return abs(ax_u - x_atu) / max(abs(ax_u), abs(x_atu), 1e-300)


def _coords(stream: CounterStream, shape, count) -> list[tuple[int, ...]]:
    size = int(np.prod(shape))
    flat = stream.integers(size, count)
    return [np.unravel_index(int(i), shape) for i in flat]


def _smooth_image(stream: CounterStream, C: int, n: int) -> np.ndarray:
    """Blocky random image plus mild noise, so edges have a clear maximum."""
    base = stream.uniform((C, n // 4, n // 4)) * 1.6 - 0.8
    img = np.repeat(np.repeat(base, 4, axis=1), 4, axis=2)
    return img + 0.05 * stream.normal((C, n, n))


def check_shape_gradient(stream, probes, size, similarity="l2", step=1e-6) -> CheckResult:
    ext = EdgeExtractor()
    y = _smooth_image(stream, 3, size)
    if similarity == "l2":
        target = stream.uniform((1, size, size))
    else:
        # keep every |sketch - target| above 1e-3 so the L1 kink is never crossed
        off = (0.01 + 0.09 * stream.uniform((1, size, size))) * np.where(
            stream.uniform((1, size, size)) < 0.5, -1.0, 1.0)
        target = ext.sketch(y) + off
    coords = _coords(stream, y.shape, probes)
    g = shape_similarity_grad(ext, y, target, similarity)
    fd = finite_diff_gradient(lambda v: s_g(ext, v, target, similarity), y, step, coords)
    return _compare(f"shape_grad_{similarity}", g, fd, coords, TOL_SHAPE)


def check_appearance_gradient(stream, probes, size, lowpass=None, step=1e-4) -> CheckResult:
    lp = lowpass or LowPass.for_size(size)
    fp = FeaturePyramid(seed=3)
    y = stream.normal((3, size, size)) * 0.5
    x = stream.normal((3, size, size)) * 0.5
    coords = _coords(stream, y.shape, probes)
    g = appearance_similarity_grad(lp, fp, y, x)
    fd = finite_diff_gradient(lambda v: s_a(lp, fp, v, x), y, step, coords)
    return _compare("appearance_grad", g, fd, coords, TOL_LINEAR)


def check_lowpass(stream, probes, size, lowpass=None) -> list[CheckResult]:
    lp = lowpass or LowPass.for_size(size)
    idem, adj = 0.0, 0.0
    for _ in range(probes):
        x = stream.normal((3, size, size))
        u = stream.normal((3, size, size))
        ox = lp(x)
        idem = max(idem, float(np.linalg.norm(lp(ox) - ox) / np.linalg.norm(x)))
        adj = max(adj, _adjoint_error(float(np.sum(ox * u)), float(np.sum(x * lp.adjoint(u)))))
    return [CheckResult("lowpass_idempotent", idem, TOL_IDEMPOTENT, probes),
            CheckResult("lowpass_adjoint", adj, TOL_ADJOINT, probes)]


def check_pyramid_adjoint(stream, probes, size) -> list[CheckResult]:
    fp = FeaturePyramid(seed=5)
    out = []
    for level in range(1, fp.levels + 1):
        err = 0.0
        for _ in range(probes):
            x = stream.normal((3, size, size))
            f = fp.features(x)[level - 1]
            u = stream.normal(f.shape)
            err = max(err, _adjoint_error(float(np.sum(f * u)),
                                          float(np.sum(x * fp.level_adjoint(level, u)))))
        out.append(CheckResult(f"pyramid_adjoint_level{level}", err, TOL_ADJOINT, probes))
    return out


def check_kernel_adjoints(stream, probes, size) -> list[CheckResult]:
    sob, conv = 0.0, 0.0
    w = stream.normal((4, 3, 3, 3))
    for _ in range(probes):
        x = stream.normal((2, size, size))
        gx, gy = kernels.sobel(x)
        ux, uy = stream.normal(gx.shape), stream.normal(gy.shape)
        sob = max(sob, _adjoint_error(float(np.sum(gx * ux) + np.sum(gy * uy)),
                                      float(np.sum(x * kernels.sobel_adjoint(ux, uy)))))
        xc = stream.normal((1, 3, size, size))
        c = kernels.conv3x3(xc, w)
        uc = stream.normal(c.shape)
        conv = max(conv, _adjoint_error(float(np.sum(c * uc)),
                                        float(np.sum(xc * kernels.conv3x3_adjoint(uc, w)))))
    return [CheckResult("sobel_adjoint", sob, TOL_ADJOINT, probes),
            CheckResult("conv3x3_adjoint", conv, TOL_ADJOINT, probes)]


def check_dsm_gradient(stream, probes=10, step=1e-5) -> CheckResult:
    sched = SdeSchedule()
    net = ScoreNet((2,), sched, seed=int(stream.integers(1 << 30, 1)[0]))
    y0 = stream.normal((16, 2))
    t = 0.05 + 0.9 * stream.uniform((16,))
    z = stream.normal((16, 2))
    _, grads = net.dsm_loss_and_grad(y0, t, z)
    flat0 = net.flat_params()
    analytic = np.concatenate([grads[n].ravel() for n in ("w1", "b1", "w2", "b2", "w3", "b3")])
    idx = [(int(i),) for i in stream.integers(flat0.size, probes)]

    def loss(flat):
        net.set_flat_params(flat)
        return net.dsm_loss_and_grad(y0, t, z)[0]

    fd = finite_diff_gradient(loss, flat0, step, idx)
    net.set_flat_params(flat0)
    return _compare("dsm_param_grad", analytic, fd, idx, TOL_DSM)


def check_gmm_score(stream, probes, step=1e-5) -> CheckResult:
    sched = SdeSchedule()
    K = 3
    w = stream.uniform((K,)) + 0.2
    gm = GaussianMixture(w / w.sum(), stream.normal((K, 2)) * 1.5, 0.2 + stream.uniform((K,)))
    ys = stream.normal((probes, 2)) * 1.5
    ts = 0.05 + 0.9 * stream.uniform((probes,))
    analytic = np.array([gm.score(sched, y, t) for y, t in zip(ys, ts)])
    numeric = np.zeros_like(analytic)
    for i, (y, t) in enumerate(zip(ys, ts)):
        numeric[i] = finite_diff_gradient(lambda v, t=t: float(gm.log_density(sched, v, t)), y, step)
    coords = list(np.ndindex(analytic.shape))
    return _compare("gmm_score", analytic, numeric, coords, TOL_SCORE)


def run_gradcheck(seed: int = 0, probes: int = 100, size: int = 16) -> list[CheckResult]:
    """Run every suite with draws from the ``SAMPLES`` stream of ``seed``."""
    stream = CounterStream(seed, stream_id(Purpose.SAMPLES, 7))
    results = [
        check_shape_gradient(stream, probes, size, "l2"),
        check_shape_gradient(stream, probes, size, "l1"),
        check_appearance_gradient(stream, probes, size),
        *check_lowpass(stream, max(probes // 10, 5), size),
        *check_pyramid_adjoint(stream, max(probes // 10, 5), size),
        *check_kernel_adjoints(stream, max(probes // 10, 5), size),
        check_dsm_gradient(stream),
        check_gmm_score(stream, probes),
    ]
    return results


def report(results: list[CheckResult], max_failures: int = 5) -> str:
    lines = []
    for r in results:
        lines.append(r.line())
        for coord, a, n, rel in r.failures[:max_failures]:
            lines.append(f"    at {coord}: analytic={a:.6e} numeric={n:.6e} rel={rel:.3e}")
    ok = sum(r.passed for r in results)
    lines.append(f"{ok}/{len(results)} checks passed")
    return "\n".join(lines)
