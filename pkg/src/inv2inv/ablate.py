"""Ablation grid runner: lambda sweeps x modes x seeds, written as CSV tables.

Seed ``s`` always pairs with dataset sample ``s mod n`` and uses ``s`` as its
trajectory seed, so rows that differ only in grid settings are paired runs.
"""

from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .energy import EnergySuite, EnergyWeights
from .metrics import psnr, shape_l2
from .sampler import SamplerConfig, canonical_mode, run_variant
from .score import ScoreModel
from .sde import SdeSchedule

LONG_FIELDS = ("run", "mode", "lambda_g", "lambda_a", "seed", "sample", "shape_l2", "psnr",
               "lowpass_l2", "seconds", "error")
AGG_FIELDS = ("mode", "lambda_g", "lambda_a", "count", "errors", "shape_l2_mean", "shape_l2_std",
              "psnr_mean", "psnr_std", "lowpass_l2_mean", "lowpass_l2_std")
METRICS = ("shape_l2", "psnr", "lowpass_l2")


def worker_count(jobs: int) -> int:
    """Workers for ``jobs`` tasks: ``INV2INV_THREADS`` if set, else the CPU count."""
    env = os.environ.get("INV2INV_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


@dataclass(frozen=True)
class AblationGrid:
    lambda_g: tuple[float, ...] = (0.0, 0.05, 0.1, 0.5)
    lambda_a: tuple[float, ...] = (2.0,)
    modes: tuple[str, ...] = ("two_stage",)
    seeds: tuple[int, ...] = tuple(range(8))

    def points(self) -> list[tuple[str, float, float]]:
        return [(canonical_mode(m), g, a)
                for m, g, a in itertools.product(self.modes, self.lambda_g, self.lambda_a)]

    @property
    def size(self) -> int:
        return len(self.modes) * len(self.lambda_g) * len(self.lambda_a)


def evaluate(outputs, sketches, exemplars, energies: EnergySuite) -> dict[str, np.ndarray]:
    """Per-run metrics: sketch fidelity, exemplar PSNR and low-pass distance."""
    sk = energies.edge.sketch(outputs)
    lp = energies.lowpass
    return {
        "shape_l2": np.array([shape_l2(a, b) for a, b in zip(sk, sketches)]),
        "psnr": np.array([psnr(o, e) for o, e in zip(outputs, exemplars)]),
        "lowpass_l2": np.array([float(np.sum((lp(o) - lp(e)) ** 2))
                                for o, e in zip(outputs, exemplars)]),
    }


def _batch(point, seeds, sketches, exemplars, score, sched, energies, base) -> list[dict]:
    mode, lg, la = point
    cfg = replace(base, mode=mode, weights=EnergyWeights(lg, la))
    n = len(sketches)
    sk = np.stack([sketches[s % n] for s in seeds])
    ex = np.stack([exemplars[s % n] for s in seeds])
    t0 = time.perf_counter()
    out = run_variant(sk, ex, score, sched, energies, cfg, list(seeds)).output
    secs = (time.perf_counter() - t0) / len(seeds)
    m = evaluate(out, sk, ex, energies)
    return [dict(seed=s, sample=s % n, seconds=secs, error="",
                 **{k: float(m[k][i]) for k in METRICS}) for i, s in enumerate(seeds)]


def _error_row(seed: int, n: int, exc: Exception) -> dict:
    return dict(seed=seed, sample=seed % n, seconds=float("nan"),
                error=f"{type(exc).__name__}: {exc}", **{k: float("nan") for k in METRICS})


def _run_point(point, seeds, sketches, exemplars, score, sched, energies, base) -> list[dict]:
    """All seeds of one grid point as one batch; on failure, retry seed by seed."""
    rest = (sketches, exemplars, score, sched, energies, base)
    n = len(sketches)
    try:
        return _batch(point, seeds, *rest)
    except Exception as exc:  # noqa: BLE001 - failures become error rows
        if len(seeds) == 1:
            return [_error_row(seeds[0], n, exc)]
    rows = []
    for s in seeds:
        try:
            rows.extend(_batch(point, [s], *rest))
        except Exception as exc:  # noqa: BLE001
            rows.append(_error_row(s, n, exc))
    return rows


def run_ablation(grid: AblationGrid, sketches, exemplars, score: ScoreModel, sched: SdeSchedule,
                 energies: EnergySuite, base: SamplerConfig = SamplerConfig(),
                 workers: int | None = None) -> list[dict]:
    """Run every grid point for every seed; one row per run, in grid order."""
    points = grid.points()
    workers = workers or worker_count(len(points))
    args = [(p, grid.seeds, sketches, exemplars, score, sched, energies, base) for p in points]
    if workers == 1:
        results = [_run_point(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _run_point(*a), args))
    rows = []
    for (mode, lg, la), point_rows in zip(points, results):
        for r in point_rows:
            rows.append({"run": len(rows), "mode": mode, "lambda_g": lg, "lambda_a": la, **r})
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["mode"], r["lambda_g"], r["lambda_a"]), []).append(r)
    out = []
    for (mode, lg, la), grp in groups.items():
        ok = [r for r in grp if not r["error"]]
        agg = {"mode": mode, "lambda_g": lg, "lambda_a": la, "count": len(ok),
               "errors": len(grp) - len(ok)}
        for k in METRICS:
            vals = np.array([r[k] for r in ok], dtype=np.float64)
            agg[f"{k}_mean"] = float(vals.mean()) if vals.size else float("nan")
            agg[f"{k}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out.append(agg)
    return out


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_csv(path, rows: list[dict], fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_tables(out_dir, rows: list[dict]) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    long_p, agg_p = out / "ablation_long.csv", out / "ablation_aggregate.csv"
    write_csv(long_p, rows, LONG_FIELDS)
    write_csv(agg_p, aggregate(rows), AGG_FIELDS)
    return long_p, agg_p
