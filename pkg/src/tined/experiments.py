"""End-to-end runs shared by the CLI and the scripts: teacher -> student -> metrics."""

import logging

import numpy as np

from .config import LossWeights, TeacherConfig, TrainConfig
from .data import generate_sbm
from .distill import (
    compute_student_profile,
    compute_teacher_profile,
    distill_student,
    heldout_metrics,
    train_mlp,
    train_teacher,
)
from .graph import make_production_split
from .models import student_dims

log = logging.getLogger(__name__)

SBM_BENCHMARK = dict(n=200, blocks=2, p_in=0.1, p_out=0.01, feature_dim=16, class_shift=1.0,
                     labels_per_class=20, val_per_class=30)


def prepare_split(bundle, mode, seed):
    if mode == "production" and not bundle.split.production:
        return bundle.with_split(make_production_split(bundle.split, seed))
    return bundle


def teacher_summary(result, bundle):
    t = result.model
    return {
        "kind": t.kind.value,
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val,
        "metrics": heldout_metrics(t, bundle.graph, bundle.features, bundle.labels, bundle.split),
    }


def run_teacher(bundle, cfg, seed):
    return train_teacher(cfg.teacher.kind, bundle.graph, bundle.features, bundle.labels, bundle.split,
                         cfg.teacher_train, seed, cfg.teacher)


def run_distill(bundle, teacher, cfg, seed, inject=True):
    """Distill and summarize; the summary is deterministic given the seed."""
    res = distill_student(teacher, bundle.graph, bundle.features, bundle.labels, bundle.split,
                          cfg.student, cfg.student_train, seed, inject=inject)
    view = res.view
    student_profile = compute_student_profile(res.model, view.graph, view.x, cfg.student, seed)
    summary = {
        "seed": seed,
        "mode": "production" if bundle.split.production else "transductive",
        "best_epoch": res.best_epoch,
        "best_val_acc": res.best_val,
        "metrics": heldout_metrics(res.model, None, bundle.features, bundle.labels, bundle.split),
        "teacher_profile": res.profile.to_dict(),
        "student_profile": student_profile.to_dict(),
        "weights": {"lam": cfg.student.lam, "beta": cfg.student.beta, "eta": cfg.student.eta,
                    "zeta": cfg.student.zeta, "mu": cfg.student.mu},
        "test_nodes": bundle.split.unlabeled.tolist(),
    }
    return res, summary


def sbm_benchmark(seeds=range(10), teacher=None, train=None, weights=None, bundle_options=None):
    """Teacher vs distilled student vs plain MLP on the bundled 2-block SBM, one row per seed."""
    teacher = teacher or TeacherConfig()
    train = train or TrainConfig()
    weights = weights or LossWeights()
    options = dict(SBM_BENCHMARK, **(bundle_options or {}))
    rows = []
    for seed in seeds:
        b = generate_sbm(seed=seed, **options)
        tr = train_teacher(teacher.kind, b.graph, b.features, b.labels, b.split, train, seed, teacher)
        t = tr.model
        test = b.split.unlabeled
        t_acc = heldout_metrics(t, b.graph, b.features, b.labels, b.split)["test"]
        prof = compute_teacher_profile(t, b.graph, b.features, weights, seed)
        st = distill_student(t, b.graph, b.features, b.labels, b.split, weights, train, seed)
        s_acc = heldout_metrics(st.model, None, b.features, b.labels, b.split)["test"]
        mlp = train_mlp(student_dims(t), b.graph, b.features, b.labels, b.split, train, seed)
        m_acc = heldout_metrics(mlp.model, None, b.features, b.labels, b.split)["test"]
        rows.append({
            "seed": seed, "teacher_acc": t_acc, "tined_acc": s_acc, "mlp_acc": m_acc,
            "ops": prof.ops, "teacher_ratios": prof.ratios.tolist(), "n_test": len(test),
        })
        log.info("seed %d teacher %.3f tined %.3f mlp %.3f", seed, t_acc, s_acc, m_acc)
    return rows


def smoothing_trend_holds(ops, ratios):
    """True when every layer's FT ratio exceeds its GP ratio."""
    r = dict(zip(ops, ratios))
    layers = sorted({op[2:] for op in ops if op.startswith("FT")})
    return all(r[f"FT{l}"] > r[f"GP{l}"] for l in layers)


def teacher_profiles_over_seeds(bundle, cfg, seeds):
    profiles = []
    for seed in seeds:
        tr = run_teacher(bundle, cfg, seed)
        profiles.append(compute_teacher_profile(tr.model, tr.view.graph, tr.view.x, cfg.student, seed))
    return profiles

