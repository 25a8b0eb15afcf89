"""Shape fidelity, exemplar similarity and distribution-recovery metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .rng import CounterStream, Purpose, stream_id
from .score import GaussianMixture

PSNR_PEAK = 2.0
PSNR_CAP = 100.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def shape_l2(a, b) -> float:
    """Root-mean-square difference between two single-channel sketches."""
    a, b = _pair(a, b)
    if a.ndim == 3 and a.shape[0] != 1:
        raise ShapeError("shape_l2 expects single-channel sketches")
    d = a - b
    return float(np.sqrt(np.mean(d * d)))


def psnr(a, b, peak: float = PSNR_PEAK, cap: float = PSNR_CAP) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return cap
    return float(10.0 * np.log10(peak * peak / mse))


def wasserstein_1d(u, v) -> float:
    u = np.sort(np.asarray(u, dtype=np.float64).ravel())
    v = np.sort(np.asarray(v, dtype=np.float64).ravel())
    if u.size == 0 or v.size == 0:
        raise DomainError("empty sample set")
    if u.size == v.size:
        return float(np.mean(np.abs(u - v)))
    # integrate |F_u^{-1} - F_v^{-1}| over the merged quantile grid
    qs = np.union1d(np.arange(1, u.size) / u.size, np.arange(1, v.size) / v.size)
    edges = np.concatenate([[0.0], qs, [1.0]])
    mid = 0.5 * (edges[:-1] + edges[1:])
    iu = np.minimum((mid * u.size).astype(int), u.size - 1)
    iv = np.minimum((mid * v.size).astype(int), v.size - 1)
    return float(np.sum(np.diff(edges) * np.abs(u[iu] - v[iv])))


def random_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    d = CounterStream(seed, stream_id(Purpose.PROJECTIONS)).normal((count, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sliced_wasserstein(samples_a, samples_b, projections: int = 128, seed: int = 0) -> float:
    """Mean 1-D Wasserstein-1 distance over random unit projections."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DomainError("empty sample set")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[1] == 1:
        dirs = np.ones((projections, 1))
    else:
        dirs = random_directions(a.shape[1], projections, seed)
    pa, pb = a @ dirs.T, b @ dirs.T
    return float(np.mean([wasserstein_1d(pa[:, k], pb[:, k]) for k in range(projections)]))


@dataclass
class GmmRecoveryReport:
    weights: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    covariance_error: float
    weight_error: float
    mean_error: float


def gmm_recovery_stats(samples, gm: GaussianMixture) -> GmmRecoveryReport:
    """Nearest-mean assignment statistics of ``samples`` against ``gm``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DomainError("need a nonempty (n, D) sample array")
    d2 = ((x[:, None, :] - gm.means[None]) ** 2).sum(axis=2)
    lab = d2.argmin(axis=1)
    K = len(gm.weights)
    counts = np.bincount(lab, minlength=K)
    weights = counts / x.shape[0]
    means = np.full_like(gm.means, np.nan)
    for k in range(K):
        if counts[k]:
            means[k] = x[lab == k].mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    cov_err = float(np.linalg.norm(cov - gm.covariance()) / np.linalg.norm(gm.covariance()))
    present = counts > 0
    mean_err = float(np.max(np.linalg.norm(means[present] - gm.means[present], axis=1)))
    return GmmRecoveryReport(weights, means, counts, cov_err,
                             float(np.max(np.abs(weights - gm.weights))), mean_err)


ROW_FIELDS = ("name", "shape_l2", "psnr")


@dataclass
class MetricReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, name: str, shape_l2_value: float, psnr_value: float) -> None:
        self.rows.append({"name": name, "shape_l2": float(shape_l2_value), "psnr": float(psnr_value)})

    @property
    def count(self) -> int:
        return len(self.rows)

    def aggregate(self) -> dict[str, float]:
        out: dict[str, float] = {"count": float(self.count)}
        for key in ("shape_l2", "psnr"):
            vals = np.array([r[key] for r in self.rows])
            out[f"{key}_mean"] = float(vals.mean()) if vals.size else float("nan")
            out[f"{key}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return out

    def write_csv(self, path) -> None:
        """One row per run, then a ``mean`` row."""
        agg = self.aggregate()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROW_FIELDS)
            for r in self.rows:
                w.writerow([r["name"], repr(r["shape_l2"]), repr(r["psnr"])])
            w.writerow(["mean", repr(agg["shape_l2_mean"]), repr(agg["psnr_mean"])])
