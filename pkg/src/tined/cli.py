"""Command-line entry point: ``tined <subcommand> ...``.

Exit codes: 0 success, 2 usage/config, 3 data, 4 training divergence,
5 internal invariant breach.
"""

import argparse
import dataclasses
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    BETA_GRID,
    BETA_TABLE_PRESET,
    ETA_GRID,
    ETA_TABLE_PRESET,
    LAMBDA_GRID,
    LR_GRID,
    MU_CHOICES,
    WEIGHT_DECAY_GRID,
    ZETA_GRID,
    RunConfig,
    run_config_from_dict,
)
from .data import generate_sbm, ingest_dataset, write_dataset
from .distill import evaluate, heldout_metrics, production_metrics
from .errors import DataError, TrainingError
from .experiments import prepare_split, run_distill, run_teacher, teacher_summary
from .graph import LaplacianKind

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("tined")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_INVARIANT = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class InvariantBreach(Exception):
    pass


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    try:
        return run_config_from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def apply_overrides(cfg, args):
    weights = {k: getattr(args, k) for k in ("lam", "beta", "eta", "zeta", "mu") if getattr(args, k, None) is not None}
    if weights:
        try:
            cfg.student = dataclasses.replace(cfg.student, **weights)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if getattr(args, "epochs", None) is not None:
        cfg.teacher_train.max_epochs = args.epochs
        cfg.student_train.max_epochs = args.epochs
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    return cfg


def load_bundle(args, cfg, seed):
    data = args.data or cfg.dataset
    if not data:
        raise UsageError("no dataset given (--data or `dataset` in the config)")
    bundle = ingest_dataset(data, cfg.split.labels_per_class, cfg.split.val_per_class, seed=seed)
    return prepare_split(bundle, cfg.mode, seed)


def out_dir(args, cfg):
    path = Path(args.out or cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_jsonl(path, records):
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def pick_seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seeds[0]


# -- subcommands --------------------------------------------------------------

def cmd_train_teacher(args):
    cfg = apply_overrides(load_config(args.config), args)
    seed = pick_seed(args, cfg)
    bundle = load_bundle(args, cfg, seed)
    out = out_dir(args, cfg)
    res = run_teacher(bundle, cfg, seed)
    summary = teacher_summary(res, bundle)
    summary["seed"] = seed
    save_checkpoint(out / "teacher.ckpt", res.model, extra={"seed": seed, "split": bundle.split.to_dict()})
    write_jsonl(out / "teacher_metrics.jsonl", res.history)
    write_json(out / "teacher_summary.json", summary)
    print(json.dumps(summary["metrics"], sort_keys=True))
    return EXIT_OK


def cmd_distill(args):
    cfg = apply_overrides(load_config(args.config), args)
    seed = pick_seed(args, cfg)
    bundle = load_bundle(args, cfg, seed)
    out = out_dir(args, cfg)
    if args.teacher:
        teacher, _ = _load_model(args.teacher)
    else:
        tres = run_teacher(bundle, cfg, seed)
        teacher = tres.model
        save_checkpoint(out / "teacher.ckpt", teacher, extra={"seed": seed})
        write_jsonl(out / "teacher_metrics.jsonl", tres.history)
    res, summary = run_distill(bundle, teacher, cfg, seed, inject=not args.no_inject)
    summary["teacher_metrics"] = heldout_metrics(teacher, bundle.graph, bundle.features, bundle.labels, bundle.split)
    save_checkpoint(out / "student.ckpt", res.model, extra={"seed": seed, "split": bundle.split.to_dict()})
    write_jsonl(out / "metrics.jsonl", res.history)
    write_json(out / "summary.json", summary)
    print(json.dumps(summary["metrics"], sort_keys=True))
    return EXIT_OK


def _load_model(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {path}") from None


def cmd_eval(args):
    model, extra = _load_model(args.checkpoint)
    cfg = load_config(args.config)
    data = args.data or cfg.dataset
    if not data:
        raise UsageError("no dataset given (--data or `dataset` in the config)")
    bundle = ingest_dataset(data, cfg.split.labels_per_class, cfg.split.val_per_class, seed=cfg.seeds[0])
    split = bundle.split
    if "split" in extra:
        from .graph import SplitSpec

        split = SplitSpec.from_dict(extra["split"])
    g = bundle.graph if hasattr(model, "kind") else None
    sets = {"test": split.unlabeled, "val": split.validation, "train": split.labeled,
            "ind": split.inductive, "obs": split.observed}
    result = {"checkpoint": str(args.checkpoint), "nodes": args.nodes}
    if args.nodes == "prod":
        if not split.production:
            raise UsageError("--nodes prod needs a production split")
        result.update(production_metrics(model, g, bundle.features, bundle.labels, split))
    else:
        result["accuracy"] = evaluate(model, g, bundle.features, bundle.labels, sets[args.nodes])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / f"eval_{args.nodes}.json", result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_analyze_de(args):
    cfg = apply_overrides(load_config(args.config), args)
    seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
    if args.layers is not None:
        cfg.teacher.num_layers = args.layers
    bundle = load_bundle(args, cfg, seeds[0])
    out = out_dir(args, cfg)
    from .experiments import teacher_profiles_over_seeds

    profiles = teacher_profiles_over_seeds(bundle, cfg, seeds)
    rows = analysis.de_ratio_report(profiles)
    analysis.write_table(rows, out / "de_ratios")
    for r in rows:
        print(f"{r['op']:>5}  {r['mean_ratio']:.6f}  (std {r['std_ratio']:.6f}, runs {r['runs']})")
    return EXIT_OK


def cmd_verify_bound(args):
    kind = LaplacianKind.NORMALIZED_SELF_LOOPS if args.normalized else LaplacianKind.COMBINATORIAL
    if args.data:
        bundle = ingest_dataset(args.data)
        reports = [analysis.verify_theorem1(bundle.graph, bundle.features, kind)]
    else:
        reports = analysis.random_bound_batch(args.random, args.n, args.p, args.d, args.seed, kind)
    holds = sum(r.bound_holds for r in reports)
    summary = {"instances": len(reports), "bound_holds": holds, "laplacian": kind.value,
               "reports": [r.to_dict() for r in reports]}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "bound_report.json", summary)
        analysis.write_table([r.to_dict() for r in reports], out / "bound_report_rows")
    print(f"{holds}/{len(reports)} bound_holds")
    if holds != len(reports):
        raise InvariantBreach(f"approximation bound violated in {len(reports) - holds} instances")
    return EXIT_OK


PRESETS = {
    "eta-table": {"eta": ETA_TABLE_PRESET},
    "beta-table": {"beta": BETA_TABLE_PRESET},
    "eta": {"eta": ETA_GRID},
    "beta": {"beta": BETA_GRID},
    "full": {"lr": LR_GRID, "weight_decay": WEIGHT_DECAY_GRID, "lam": LAMBDA_GRID, "beta": BETA_GRID,
             "eta": ETA_GRID, "zeta": ZETA_GRID, "mu": MU_CHOICES},
}


def _run_cell(bundle, teacher, cfg, seed, cell):
    cfg = dataclasses.replace(cfg, student=dataclasses.replace(cfg.student),
                              student_train=dataclasses.replace(cfg.student_train))
    for key, value in cell.items():
        if key in ("lr", "weight_decay"):
            setattr(cfg.student_train, key, value)
        else:
            setattr(cfg.student, key, value)
    cfg.student.__post_init__()
    _, summary = run_distill(bundle, teacher, cfg, seed)
    row = {"seed": seed, **cell, "best_val_acc": summary["best_val_acc"], **summary["metrics"]}
    return row


def cmd_sweep(args):
    cfg = apply_overrides(load_config(args.config), args)
    seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
    grid = PRESETS[args.preset]
    keys = list(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    out = out_dir(args, cfg)
    threads = max(1, int(os.environ.get("TINED_THREADS", "1")))
    jobs = []
    for seed in seeds:
        bundle = load_bundle(args, cfg, seed)
        teacher = run_teacher(bundle, cfg, seed).model
        jobs.extend((bundle, teacher, cfg, seed, cell) for cell in cells)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda job: _run_cell(*job), jobs))
    analysis.write_table(rows, out / "sweep")
    metric = "prod" if cfg.mode == "production" else "test"
    best = aggregate_sweep(rows, keys, metric)
    write_json(out / "sweep_best.json", best)
    print(json.dumps(best, sort_keys=True))
    return EXIT_OK


def aggregate_sweep(rows, keys, metric):
    """Mean validation/test accuracy per cell across seeds; best cell chosen on validation."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    table = []
    for cell, rs in groups.items():
        table.append({**dict(zip(keys, cell)),
                      "mean_val_acc": float(np.mean([r["best_val_acc"] for r in rs])),
                      f"mean_{metric}": float(np.mean([r[metric] for r in rs])),
                      f"std_{metric}": float(np.std([r[metric] for r in rs]))})
    best = max(table, key=lambda row: row["mean_val_acc"])
    return {"best": best, "cells": len(table)}


def cmd_generate_sbm(args):
    bundle = generate_sbm(args.n, args.blocks, args.p_in, args.p_out, args.dim, args.shift, args.seed,
                          labels_per_class=args.labels_per_class, val_per_class=args.val_per_class)
    write_dataset(bundle, args.out)
    print(f"wrote {bundle.graph.n} nodes, {bundle.graph.m} edges to {args.out}")
    return EXIT_OK


def parse_seeds(text):
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None


# -- parser -------------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--config", help="run configuration (TOML)")
    if data:
        p.add_argument("--data", help="dataset directory (edges.txt, features.csv, labels.txt[, split.json])")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)


def _weights(p):
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--mu", choices=MU_CHOICES)
    p.add_argument("--epochs", type=int, help="override max_epochs for teacher and student")
    p.add_argument("--mode", choices=["transductive", "production"])


def build_parser():
    parser = argparse.ArgumentParser(prog="tined", description="GNN-to-MLP distillation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a GNN teacher")
    _common(p)
    _weights(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a teacher into an MLP student")
    _common(p)
    _weights(p)
    p.add_argument("--teacher", help="teacher checkpoint (trained from scratch when omitted)")
    p.add_argument("--no-inject", action="store_true", help="random student init instead of teacher injection")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a node set")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nodes", choices=["test", "val", "train", "ind", "obs", "prod"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-de", help="layer-wise DE ratios of trained teachers")
    _common(p)
    _weights(p)
    p.add_argument("--seeds", help="comma list or lo-hi range")
    p.add_argument("--layers", type=int, help="teacher depth (e.g. 2 or 5)")
    p.set_defaults(func=cmd_analyze_de)

    p = sub.add_parser("verify-bound", help="check the propagation-approximation bound")
    p.add_argument("--random", type=int, default=50, help="number of random instances")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", help="check a dataset's features instead of random instances")
    p.add_argument("--normalized", action="store_true", help="use D^-1/2 (A+I) D^-1/2 instead of D - A")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_bound)

    p = sub.add_parser("sweep", help="hyperparameter grid over distillation settings")
    _common(p)
    _weights(p)
    p.add_argument("--seeds")
    p.add_argument("--preset", choices=sorted(PRESETS), default="eta-table")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate-sbm", help="write a stochastic-block-model dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels-per-class", type=int, default=20)
    p.add_argument("--val-per-class", type=int, default=30)
    p.set_defaults(func=cmd_generate_sbm)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tined: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"tined: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"tined: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InvariantBreach as exc:
        print(f"tined: invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
