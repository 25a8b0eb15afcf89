"""File-level drivers behind the CLI: sampling runs, manifest replay, training."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .checkpoint import load_score_net, save_score_net
from .config import RunConfig, parse_config_text
from .dataset import load_dataset
from .energy import image_to_sketch
from .errors import ConfigError, FormatError, ShapeError
from .manifest import read_manifest, run_manifest, section, write_manifest
from .sampler import RunRecord, run_variant
from .score import GaussianMixture, GmmScore, ScoreModel, ScoreNet, TrainConfig, train_dsm
from .sde import SdeSchedule
from .tensorio import file_digest, load_array, read_tensor, write_image, write_tensor

MANIFEST_FILE = "manifest.txt"
TRACE_FIELDS = ("stage", "step", "t", "shape_energy", "appearance_energy")
LOSS_FIELDS = ("iteration", "loss")


def load_sketch(path) -> np.ndarray:
    """Read a sketch stored in image convention and return it in ``[0, 1]``."""
    img = load_array(path)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ShapeError(f"{path}: sketch must be (1|3, H, W), got {img.shape}")
    return image_to_sketch(img)


def load_exemplar(path) -> np.ndarray:
    img = load_array(path)
    if img.ndim != 3:
        raise ShapeError(f"{path}: exemplar must be (C, H, W), got {img.shape}")
    return img


def dataset_photos(path) -> np.ndarray:
    """Photos of a generated dataset directory, or an IVIT tensor of samples."""
    p = Path(path)
    if p.is_dir():
        return np.stack([s.photo for s in load_dataset(p)])
    return read_tensor(p)


def build_score(cfg: RunConfig, event_shape: tuple[int, ...]) -> ScoreModel:
    sched = cfg.schedule()
    backend = cfg["score.backend"]
    if backend == "net":
        if "score" not in cfg.paths:
            raise ConfigError("score.backend = net needs paths.score (a checkpoint directory)")
        net = load_score_net(cfg.paths["score"])
        if net.event_shape != tuple(event_shape):
            raise ShapeError(f"score net expects {net.event_shape}, inputs are {tuple(event_shape)}")
        net.sched = sched
        return net
    if "dataset" not in cfg.paths:
        raise ConfigError("score.backend = gmm needs paths.dataset")
    photos = dataset_photos(cfg.paths["dataset"])
    if photos.shape[1:] != tuple(event_shape):
        raise ShapeError(f"dataset photos are {photos.shape[1:]}, inputs are {tuple(event_shape)}")
    n = photos.shape[0]
    gm = GaussianMixture(np.full(n, 1.0 / n), photos.reshape(n, -1), cfg["score.gmm_variance"])
    return GmmScore(gm, sched)


def _score_inputs(cfg: RunConfig) -> dict[str, Path]:
    if cfg["score.backend"] == "net":
        root = Path(cfg.paths["score"])
        return {f"score.{p.stem}": p for p in sorted(root.glob("*.ivit"))}
    p = Path(cfg.paths["dataset"])
    if p.is_file():
        return {"score.dataset": p}
    return {f"score.{q.parent.name}.{q.stem}": q for q in sorted(p.glob("photos/*.ivit"))}


def write_trace(path, record: RunRecord) -> None:
    cfg = record.config
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for stage, tr in record.traces.items():
            m_frac, steps = cfg.stage(2 if stage == "stage2" else 1)
            h = m_frac / steps
            shape = tr["shape"]
            app = tr.get("appearance")
            for j in range(shape.shape[0]):
                t = (steps - j) * h
                a = "" if app is None else repr(float(app[j, 0]))
                w.writerow([stage, j, repr(t), repr(float(shape[j, 0])), a])


@dataclass
class SampleResult:
    record: RunRecord
    manifest: dict[str, str]
    out_dir: Path


def run_sample(cfg: RunConfig, sketch_path, exemplar_path, out_dir, *,
               save_stage1: bool = False, trace_energy: bool = False,
               warn=None) -> SampleResult:
    """Run the configured sampler on one sketch/exemplar pair and write outputs.

    Writes ``final.ivit`` and ``final.ppm`` (plus ``stage1.*`` and
    ``energy_trace.csv`` when requested) and ``manifest.txt`` into ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scfg = cfg.sampler()
    sketch = load_sketch(sketch_path)
    inputs = {"sketch": Path(sketch_path).resolve()}
    if scfg.mode == "sdedit":
        if exemplar_path is not None and warn is not None:
            warn("mode sdedit ignores the exemplar")
        exemplar = np.zeros((3,) + sketch.shape[1:])
    else:
        if exemplar_path is None:
            raise ConfigError(f"mode {scfg.mode} needs an exemplar")
        exemplar = load_exemplar(exemplar_path)
        inputs["exemplar"] = Path(exemplar_path).resolve()
        if exemplar.shape[1:] != sketch.shape[1:]:
            raise ShapeError(f"sketch {sketch.shape} and exemplar {exemplar.shape} sizes differ")
    C, H, _ = exemplar.shape
    score = build_score(cfg, exemplar.shape)
    energies = cfg.energies(C, H)
    t0 = time.perf_counter()
    rec = run_variant(sketch, exemplar, score, cfg.schedule(), energies, scfg,
                      scfg.seed, trace=trace_energy)
    total = time.perf_counter() - t0
    outputs = {}
    for name, arr in (("final", rec.output), ("stage1", rec.stage1 if save_stage1 else None)):
        if arr is None:
            continue
        write_tensor(out / f"{name}.ivit", arr)
        write_image(out / f"{name}.ppm", arr)
        outputs[f"{name}.ivit"] = out / f"{name}.ivit"
        outputs[f"{name}.ppm"] = out / f"{name}.ppm"
    if trace_energy:
        write_trace(out / "energy_trace.csv", rec)
        outputs["energy_trace.csv"] = out / "energy_trace.csv"
    inputs.update({k: p.resolve() for k, p in _score_inputs(cfg).items()})
    timings = {**rec.timings, "total": total}
    extra = {"run.save_stage1": str(save_stage1).lower(),
             "run.trace_energy": str(trace_energy).lower(),
             "run.kernel_backend": kernels.BACKEND}
    m = run_manifest(cfg.items(), cfg.digest(), inputs, outputs, timings, extra)
    write_manifest(out / MANIFEST_FILE, m)
    return SampleResult(rec, m, out)


def config_from_manifest(manifest: dict[str, str]) -> RunConfig:
    items = section(manifest, "config")
    items.pop("hash", None)
    text = "".join(f"{k} = {v}\n" for k, v in items.items())
    cfg = parse_config_text(text)
    if cfg.digest() != manifest.get("config.hash"):
        raise FormatError("manifest config does not hash to its recorded config.hash")
    return cfg


def replay(manifest_path, out_dir, *, check_inputs: bool = True, warn=None) -> SampleResult:
    """Re-run a recorded sampler invocation and return the fresh result.

    Input digests are verified first so a replay never silently runs on
    different bytes.  Compare ``output.*.sha256`` entries to confirm the
    outputs are byte-identical.
    """
    m = read_manifest(manifest_path)
    cfg = config_from_manifest(m)
    if check_inputs:
        for key, value in m.items():
            if key.startswith("input.") and key.endswith(".sha256"):
                p = m[key[: -len(".sha256")]]
                if not os.path.exists(p) or file_digest(p) != value:
                    raise FormatError(f"replay input {p} is missing or differs from the recording")
    return run_sample(cfg, m["input.sketch"], m.get("input.exemplar"), out_dir,
                      save_stage1=m.get("run.save_stage1") == "true",
                      trace_energy=m.get("run.trace_energy") == "true", warn=warn)


def output_digests(manifest: dict[str, str]) -> dict[str, str]:
    return {k[len("output."):-len(".sha256")]: v for k, v in manifest.items()
            if k.startswith("output.") and k.endswith(".sha256")}


def train_score(dataset_path, out_dir, tcfg: TrainConfig, sched: SdeSchedule | None = None,
                hidden: int = 256, init_seed: int = 0, progress=None):
    """Train a score network on a dataset and write checkpoint plus ``loss.csv``."""
    sched = sched or SdeSchedule()
    data = dataset_photos(dataset_path)
    net = ScoreNet(data.shape[1:], sched, seed=init_seed, hidden=hidden)
    t0 = time.perf_counter()
    res = train_dsm(net, sched, data, tcfg, progress=progress)
    secs = time.perf_counter() - t0
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_FIELDS)
        for i, loss in enumerate(res.losses, start=1):
            w.writerow([i * tcfg.log_interval, repr(float(loss))])
    extra = {f"train.{k}": str(v) for k, v in vars(tcfg).items()}
    extra["train.dataset"] = str(Path(dataset_path).resolve())
    extra["train.count"] = str(data.shape[0])
    extra["timing.train"] = f"{secs:.6f}"
    save_score_net(out, res.net, extra)
    return res
