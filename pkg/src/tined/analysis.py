"""Checks of the propagation-approximation bound, approximation-error tables, DE-ratio reports."""

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .graph import Graph, LaplacianKind, laplacian
from .linalg import frobenius_norm, lambda_max_symmetric, least_squares
from .models import apply_fc, teacher_forward

BOUND_SLACK = 1e-9


@dataclass
class BoundReport:
    relative_error: float
    lambda_max: float
    bound_holds: bool

    def to_dict(self):
        return asdict(self)


def verify_theorem1(g, h, kind=LaplacianKind.COMBINATORIAL):
    """Best linear emulation of ``L H`` by ``H W`` and its relative error against lambda_max(L).

    ``W* = argmin ||L H - H W||_F`` is obtained by QR least squares, which equals the
    pseudo-inverse solution when ``H`` has full column rank.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[0] != g.n:
        raise ShapeError(f"H has {h.shape[0]} rows, graph has {g.n} nodes")
    lap = laplacian(g, kind)
    lh = lap @ h
    w = least_squares(h, lh)
    err = frobenius_norm(lh - h @ w) / frobenius_norm(h)
    lam = lambda_max_symmetric(lap)
    return BoundReport(err, lam, bool(err <= lam + BOUND_SLACK))


def erdos_renyi(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


def random_bound_batch(count=50, n=30, p=0.2, d=8, seed=0, kind=LaplacianKind.COMBINATORIAL):
    """``count`` seeded Erdos-Renyi graphs with Gaussian n x d features."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(count):
        g = erdos_renyi(n, p, rng)
        h = rng.standard_normal((n, d))
        reports.append(verify_theorem1(g, h, kind))
    return reports


def approximation_error_table(t, s, g, x):
    """Per teacher GP: ||GP(H) - FC(H)||_F / ||H||_F with H the teacher's input to that GP."""
    trace = teacher_forward(t, g, x, record=True).trace
    gps = [e for e in trace if e.op.startswith("GP")]
    gp_layers = [layer for layer in s.layers if layer.role.value == "gp"]
    if len(gps) != len(gp_layers):
        raise ShapeError(f"teacher has {len(gps)} GP operations, student has {len(gp_layers)} GP-emulating layers")
    rows = []
    for entry, layer in zip(gps, gp_layers):
        h = entry.input
        if h.shape[1] != layer.weight.shape[0]:
            raise ShapeError(f"{entry.op}: input width {h.shape[1]} vs student layer rows {layer.weight.shape[0]}")
        emulated = apply_fc(layer, h)
        if emulated.shape != entry.output.shape:
            raise ShapeError(f"{entry.op}: teacher output {entry.output.shape} vs student {emulated.shape}")
        err = frobenius_norm(entry.output - emulated) / frobenius_norm(h)
        rows.append({"op": entry.op, "error": err})
    return rows


def de_ratio_report(profiles):
    """Mean and spread of DE ratios per op across repeated runs (a list of DERatioProfile)."""
    if not profiles:
        raise ValueError("need at least one profile")
    ops = profiles[0].ops
    stack = np.array([p.ratios for p in profiles])
    return [
        {"op": op, "mean_ratio": float(stack[:, i].mean()), "std_ratio": float(stack[:, i].std()),
         "runs": len(profiles), "per_run": stack[:, i].tolist()}
        for i, op in enumerate(ops)
    ]


def write_table(rows, path_stem):
    """Write ``rows`` (list of flat dicts) as ``<stem>.json`` and ``<stem>.csv``."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    scalar_keys = [k for k, v in rows[0].items() if not isinstance(v, (list, dict))] if rows else []
    with stem.with_suffix(".csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=scalar_keys, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    return stem
