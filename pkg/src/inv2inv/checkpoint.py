"""Score-network checkpoints: one IVIT file per parameter block plus ``model.txt``."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .manifest import read_manifest, write_manifest
from .score import PARAM_NAMES, GaussianPrior, ScoreNet
from .sde import SdeSchedule
from .tensorio import read_tensor, write_tensor

MODEL_FILE = "model.txt"
PRIOR_BLOCKS = ("prior_mean", "prior_basis", "prior_eigvals", "prior_rest")


def _blocks(net: ScoreNet) -> dict[str, np.ndarray]:
    out = dict(net.params)
    if net.prior is not None:
        p = net.prior
        out.update(prior_mean=p.mean, prior_basis=p.basis, prior_eigvals=p.eigvals,
                   prior_rest=np.array([p.rest_var]))
    return out


def save_score_net(directory, net: ScoreNet, extra: dict[str, str] | None = None) -> Path:
    """Write ``net`` under ``directory``.  Parameters are stored as float32."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = {
        "kind": "score_net",
        "event_shape": ",".join(str(d) for d in net.event_shape),
        "hidden": str(net.hidden),
        "seed": str(net.seed),
        "schedule.beta_min": repr(net.sched.beta_min),
        "schedule.beta_max": repr(net.sched.beta_max),
        "schedule.T": repr(net.sched.T),
    }
    for name, arr in _blocks(net).items():
        # IVIT needs rank >= 1; an empty prior basis keeps its (D, 0) shape
        write_tensor(root / f"{name}.ivit", arr)
        entries[f"block.{name}"] = "x".join(str(d) for d in arr.shape)
    entries.update(extra or {})
    write_manifest(root / MODEL_FILE, entries)
    return root


def _shape(text: str) -> tuple[int, ...]:
    return tuple(int(d) for d in text.split("x"))


def load_score_net(directory) -> ScoreNet:
    root = Path(directory)
    meta = read_manifest(root / MODEL_FILE)
    if meta.get("kind") != "score_net":
        raise FormatError(f"{root / MODEL_FILE} does not describe a score network")
    sched = SdeSchedule(float(meta["schedule.beta_min"]), float(meta["schedule.beta_max"]),
                        float(meta["schedule.T"]))
    blocks = {}
    for key, value in meta.items():
        if key.startswith("block."):
            name = key[len("block."):]
            arr = read_tensor(root / f"{name}.ivit")
            if arr.shape != _shape(value):
                raise FormatError(f"block {name} has shape {arr.shape}, manifest says {value}")
            blocks[name] = arr
    missing = [n for n in PARAM_NAMES if n not in blocks]
    if missing:
        raise FormatError(f"checkpoint lacks parameter blocks {missing}")
    prior = None
    if all(n in blocks for n in PRIOR_BLOCKS):
        prior = GaussianPrior(blocks["prior_mean"], blocks["prior_basis"],
                              blocks["prior_eigvals"], float(blocks["prior_rest"][0]))
    event_shape = tuple(int(d) for d in meta["event_shape"].split(","))
    return ScoreNet(event_shape, sched, int(meta["seed"]), int(meta["hidden"]),
                    {n: blocks[n] for n in PARAM_NAMES}, prior)
