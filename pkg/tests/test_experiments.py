import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from tined.config import RunConfig, TeacherConfig, TrainConfig
from tined.data import generate_sbm
from tined.distill import de_ratio
from tined.experiments import prepare_split, run_distill, run_teacher, sbm_benchmark, smoothing_trend_holds
from tined.graph import full_edge_set, mean_aggregator


def test_smoothing_trend_predicate():
    ops = ["GP1", "FT1", "GP2", "FT2"]
    assert smoothing_trend_holds(ops, [0.1, 0.9, 0.4, 2.0])
    assert not smoothing_trend_holds(ops, [0.1, 0.9, 2.5, 2.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_concat_propagation_never_smooths(seed):
    # E(concat(H, MH)) = E(H) + E(MH), so the concatenating GP has ratio >= 1
    r = np.random.default_rng(seed)
    g = random_graph(15, 0.3, r)
    if g.m == 0:
        return
    h = r.normal(size=(15, 3))
    out = np.hstack([h, mean_aggregator(g) @ h])
    assert de_ratio(h, out, full_edge_set(g)) >= 1.0


def test_benchmark_row_layout():
    rows = sbm_benchmark(seeds=[0], train=TrainConfig(max_epochs=20), teacher=TeacherConfig(hidden=16))
    assert set(rows[0]) >= {"seed", "teacher_acc", "tined_acc", "mlp_acc", "ops", "teacher_ratios"}
    assert rows[0]["ops"] == ["GP1", "FT1", "GP2", "FT2"]


def test_run_distill_summary_is_json_ready():
    import json

    b = generate_sbm(n=60, feature_dim=6, seed=1, labels_per_class=5, val_per_class=5)
    cfg = RunConfig(mode="production")
    cfg.teacher_train.max_epochs = cfg.student_train.max_epochs = 15
    b = prepare_split(b, cfg.mode, 1)
    t = run_teacher(b, cfg, 1).model
    _, summary = run_distill(b, t, cfg, 1)
    text = json.dumps(summary, sort_keys=True)
    assert json.loads(text)["mode"] == "production"
