#!/usr/bin/env python3
"""Check the propagation-approximation bound on random graphs; prints one line per instance."""

import argparse
import sys

from tined.analysis import random_bound_batch
from tined.graph import LaplacianKind


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--p", type=float, default=0.2)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--normalized", action="store_true")
    args = ap.parse_args()
    kind = LaplacianKind.NORMALIZED_SELF_LOOPS if args.normalized else LaplacianKind.COMBINATORIAL
    reports = random_bound_batch(args.count, args.n, args.p, args.d, args.seed, kind)
    for i, r in enumerate(reports):
        print(f"{i:3d}  err {r.relative_error:.6f}  lambda_max {r.lambda_max:.6f}  {'ok' if r.bound_holds else 'VIOLATED'}")
    holds = sum(r.bound_holds for r in reports)
    print(f"{holds}/{len(reports)} bound_holds")
    return 0 if holds == len(reports) else 1


if __name__ == "__main__":
    sys.exit(main())
