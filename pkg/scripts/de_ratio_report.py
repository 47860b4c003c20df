#!/usr/bin/env python3
"""Layer-wise DE ratios of trained teachers on the SBM benchmark, for several depths."""

import argparse
from pathlib import Path

from tined.analysis import de_ratio_report, write_table
from tined.config import RunConfig, TeacherConfig, TrainConfig
from tined.data import generate_sbm
from tined.experiments import SBM_BENCHMARK, teacher_profiles_over_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", nargs="+", default=["graphsage", "gcn", "gat"])
    ap.add_argument("--depths", nargs="+", type=int, default=[2, 5])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--out", default="runs/de_ratios")
    args = ap.parse_args()

    bundle = generate_sbm(seed=0, **SBM_BENCHMARK)
    for kind in args.kinds:
        for depth in args.depths:
            cfg = RunConfig(teacher=TeacherConfig(kind=kind, num_layers=depth),
                            teacher_train=TrainConfig(max_epochs=args.epochs))
            rows = de_ratio_report(teacher_profiles_over_seeds(bundle, cfg, range(args.seeds)))
            write_table(rows, Path(args.out) / f"{kind}_L{depth}")
            print(f"{kind} depth {depth}")
            for r in rows:
                print(f"  {r['op']:>4}  {r['mean_ratio']:9.4f} +- {r['std_ratio']:.4f}")


if __name__ == "__main__":
    main()
