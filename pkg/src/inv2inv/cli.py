"""Command-line entry point: ``inv2inv <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablate import AblationGrid, run_ablation, worker_count, write_tables
from .config import RunConfig, parse_config
from .dataset import EXEMPLAR_KINDS, SHAPES, ToyDatasetSpec, generate_toy_dataset, load_dataset
from .energy import EdgeExtractor
from .errors import Inv2InvError
from .gradcheck import report, run_gradcheck
from .manifest import read_manifest
from .metrics import MetricReport, psnr, shape_l2
from .runner import (MANIFEST_FILE, build_score, load_exemplar, load_sketch, output_digests,
                     replay, run_sample, train_score)
from .score import TrainConfig
from .tensorio import load_array


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def load_config(path: str | None) -> RunConfig:
    """Parse ``path`` (or take defaults); relative ``paths.*`` resolve against its folder."""
    if path is None:
        return RunConfig()
    cfg = parse_config(path)
    base = Path(path).resolve().parent
    fixed = {f"paths.{k}": str((base / v).resolve()) for k, v in cfg.paths.items()}
    return cfg.with_values(**fixed) if fixed else cfg


# --- subcommands ----------------------------------------------------------

def cmd_gen_dataset(args) -> int:
    spec = ToyDatasetSpec(size=args.size, count=args.count, seed=args.seed, jitter=args.jitter,
                          shapes=_names(args.shapes), exemplar_kinds=_names(args.exemplar_kinds))
    root = generate_toy_dataset(spec, args.out)
    print(f"wrote {spec.count} samples to {root}")
    return 0


def cmd_train_score(args) -> int:
    cfg = load_config(args.config)
    prior = {"auto": None, "on": True, "off": False}[args.prior]
    tcfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, iterations=args.iterations,
                       t_min_frac=args.t_min_frac, seed=args.seed, log_interval=args.log_interval,
                       weighting=args.weighting, fit_prior=prior, prior_rank=args.prior_rank)

    def progress(it, loss):
        if not args.quiet:
            print(f"iter {it:>7d}  loss {loss:.6g}", flush=True)

    res = train_score(args.dataset, args.out, tcfg, cfg.schedule(), hidden=args.hidden,
                      init_seed=args.init_seed, progress=progress)
    if res.losses.size:
        print(f"first logged loss {res.losses[0]:.6g}, last {res.losses[-1]:.6g}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_sample(args) -> int:
    if args.replay:
        res = replay(args.replay, args.out, warn=_warn)
        want = output_digests(read_manifest(args.replay))
        got = output_digests(res.manifest)
        diff = sorted(k for k in want if got.get(k) != want[k])
        if diff:
            print(f"replay outputs differ from the recording: {', '.join(diff)}", file=sys.stderr)
            return 1
        print(f"replay reproduced {len(want)} outputs byte for byte in {args.out}")
        return 0
    if not args.sketch:
        raise SystemExit("sample: --sketch is required unless --replay is given")
    cfg = load_config(args.config)
    updates = {}
    if args.mode:
        updates["sampler.mode"] = args.mode
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        cfg = cfg.with_values(**updates)
    res = run_sample(cfg, args.sketch, args.exemplar, args.out, save_stage1=args.save_stage1,
                     trace_energy=args.trace_energy, warn=_warn)
    print(f"wrote {res.out_dir / 'final.ppm'} (config {cfg.digest()[:12]})")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    data_dir = args.dataset or cfg.paths.get("dataset")
    if data_dir is None:
        raise SystemExit("ablate: give --dataset or paths.dataset in the config")
    samples = load_dataset(data_dir)
    if args.limit:
        samples = samples[: args.limit]
    sketches = np.stack([s.sketch for s in samples])
    exemplars = np.stack([s.exemplar for s in samples])
    grid = AblationGrid(lambda_g=_floats(args.lambda_g), lambda_a=_floats(args.lambda_a),
                        modes=_names(args.modes),
                        seeds=tuple(range(args.seed_start, args.seed_start + args.seeds)))
    C, H = exemplars.shape[1], exemplars.shape[2]
    score = build_score(cfg, exemplars.shape[1:])
    workers = args.workers or worker_count(grid.size)
    print(f"{grid.size} grid points x {len(grid.seeds)} seeds on {workers} worker(s)")
    rows = run_ablation(grid, sketches, exemplars, score, cfg.schedule(), cfg.energies(C, H),
                        cfg.sampler(), workers)
    long_p, agg_p = write_tables(args.out, rows)
    bad = sum(1 for r in rows if r["error"])
    print(f"wrote {long_p} ({len(rows)} rows, {bad} errors) and {agg_p}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed, probes=args.probes, size=args.size)
    print(report(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_metrics(args) -> int:
    rep = MetricReport()
    if args.run:
        for d in args.run:
            m = read_manifest(Path(d) / MANIFEST_FILE)
            out = load_array(Path(d) / "final.ivit")
            sk = load_sketch(m["input.sketch"])
            ex = load_exemplar(m["input.exemplar"]) if "input.exemplar" in m else None
            _add(rep, str(d), out, sk, ex)
    elif args.output and args.sketch:
        ex = load_exemplar(args.exemplar) if args.exemplar else None
        _add(rep, args.output, load_array(args.output), load_sketch(args.sketch), ex)
    else:
        raise SystemExit("metrics: give --run DIR... or --output with --sketch")
    for r in rep.rows:
        print(f"{r['name']}: shape_l2={r['shape_l2']:.6f} psnr={r['psnr']:.3f}")
    agg = rep.aggregate()
    print(f"mean shape_l2={agg['shape_l2_mean']:.6f} psnr={agg['psnr_mean']:.3f} "
          f"over {rep.count} run(s)")
    if args.csv:
        rep.write_csv(args.csv)
    return 0


def _add(rep: MetricReport, name, output, sketch, exemplar) -> None:
    value = psnr(output, exemplar) if exemplar is not None else float("nan")
    rep.add(name, shape_l2(EdgeExtractor().sketch(output), sketch), value)


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inv2inv", description=__doc__)
    p.add_argument("--version", action="version", version=f"inv2inv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="write a procedural toy dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=64)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jitter", type=float, default=0.0, help="freehand warp amplitude (pixels)")
    g.add_argument("--shapes", default=",".join(SHAPES))
    g.add_argument("--exemplar-kinds", default="photo", help=f"subset of {','.join(EXEMPLAR_KINDS)}")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train-score", help="train a score network by denoising score matching")
    t.add_argument("--dataset", required=True, help="dataset directory or IVIT sample tensor")
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="config file (schedule.* keys are used)")
    t.add_argument("--iterations", type=int, default=20_000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--seed", type=int, default=0, help="seed of the minibatch streams")
    t.add_argument("--init-seed", type=int, default=0, help="seed of the parameter init")
    t.add_argument("--hidden", type=int, default=256)
    t.add_argument("--log-interval", type=int, default=100)
    t.add_argument("--t-min-frac", type=float, default=0.01)
    t.add_argument("--weighting", choices=("auto", "none", "sigma2"), default="auto",
                   help="DSM loss weighting; auto uses sigma2 when the data is wider than the net")
    t.add_argument("--prior", choices=("auto", "on", "off"), default="auto",
                   help="Gaussian skip path; auto fits it when the data is wider than the net")
    t.add_argument("--prior-rank", type=int, default=64)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train_score)

    s = sub.add_parser("sample", help="translate one sketch with an exemplar")
    s.add_argument("--config")
    s.add_argument("--sketch")
    s.add_argument("--exemplar")
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("two_stage", "variant1", "variant2", "sdedit"))
    s.add_argument("--seed", type=int)
    s.add_argument("--save-stage1", action="store_true")
    s.add_argument("--trace-energy", action="store_true")
    s.add_argument("--replay", metavar="MANIFEST", help="re-run a recorded manifest")
    s.set_defaults(func=cmd_sample)

    a = sub.add_parser("ablate", help="run a lambda/mode grid over paired seeds")
    a.add_argument("--config")
    a.add_argument("--dataset")
    a.add_argument("--out", required=True)
    a.add_argument("--lambda-g", default="0,0.05,0.1,0.5")
    a.add_argument("--lambda-a", default="2")
    a.add_argument("--modes", default="two_stage")
    a.add_argument("--seeds", type=int, default=8)
    a.add_argument("--seed-start", type=int, default=0)
    a.add_argument("--limit", type=int, help="use only the first N dataset samples")
    a.add_argument("--workers", type=int, help="overrides INV2INV_THREADS")
    a.set_defaults(func=cmd_ablate)

    c = sub.add_parser("gradcheck", help="verify analytic gradients and adjoints")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--probes", type=int, default=100)
    c.add_argument("--size", type=int, default=16)
    c.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("metrics", help="shape L2 and PSNR of finished runs")
    m.add_argument("--run", nargs="+", help="output directories of `sample`")
    m.add_argument("--output")
    m.add_argument("--sketch")
    m.add_argument("--exemplar")
    m.add_argument("--csv")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Inv2InvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
