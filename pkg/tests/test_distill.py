import dataclasses

import numpy as np
import pytest

from conftest import assert_grad_close, numeric_grad, random_graph
from tined.autodiff import Adam, Tape
from tined.config import LossWeights, TrainConfig
from tined.data import generate_sbm
from tined.distill import (
    DERatioProfile,
    _fit,
    audit_access,
    ce_loss,
    check_distribution,
    compute_teacher_profile,
    de_edge_set,
    de_ratio,
    distill_student,
    ded_loss,
    evaluate,
    kl_loss,
    mu_value,
    production_metrics,
    softmax,
    total_loss,
    train_mlp,
    train_teacher,
    training_view,
)
from tined.errors import DataError, DomainError, TrainingError
from tined.graph import dirichlet_energy, full_edge_set, make_production_split
from tined.models import Role, init_teacher, inject_teacher, student_dims, student_graph, teacher_forward

FAST = TrainConfig(lr=0.01, weight_decay=5e-4, max_epochs=40)


@pytest.fixture(scope="module")
def small():
    return generate_sbm(n=60, blocks=2, p_in=0.2, p_out=0.02, feature_dim=6, class_shift=1.5, seed=3,
                        labels_per_class=5, val_per_class=5)


@pytest.fixture(scope="module")
def small_teacher(small):
    b = small
    return train_teacher("graphsage", b.graph, b.features, b.labels, b.split, FAST, seed=0).model


# -- losses ---------------------------------------------------------------------

def test_ce_loss_by_hand():
    logits = np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    labels = np.array([0, 0, 1])
    got = float(ce_loss(Tape(), logits, labels, [0, 1]).value[0, 0])
    ref = -(np.log(np.exp(2) / (np.exp(2) + 1)) + np.log(1 / (1 + np.e))) / 2
    assert got == pytest.approx(ref, rel=1e-14)


def test_kl_loss_by_hand_and_zero_at_match():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 3))
    z = softmax(rng.normal(size=(4, 3)))
    q = softmax(logits)
    ref = np.mean(np.sum(z * (np.log(z) - np.log(q)), axis=1))
    assert float(kl_loss(Tape(), logits, z, np.arange(4)).value[0, 0]) == pytest.approx(ref, rel=1e-12)
    assert abs(float(kl_loss(Tape(), logits, q, np.arange(4)).value[0, 0])) < 1e-14


def test_kl_accepts_one_hot_targets():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.isfinite(kl_loss(Tape(), np.zeros((2, 2)), z, [0, 1]).value).all()


def test_soft_label_validation():
    with pytest.raises(DataError):
        check_distribution([[0.5, 0.6]])
    with pytest.raises(DataError):
        check_distribution([[1.2, -0.2]])


def test_empty_node_sets_rejected():
    with pytest.raises(DomainError):
        ce_loss(Tape(), np.zeros((2, 2)), np.zeros(2, int), [])


def test_mu_transforms():
    assert mu_value(4.0, "identity") == 4.0
    assert mu_value(4.0, "sqrt") == pytest.approx(2.0)
    assert mu_value(np.e, "log") == pytest.approx(1.0)
    assert np.isfinite(mu_value(0.0, "log"))


def test_de_ratio_is_energy_quotient(rng):
    g = random_graph(15, 0.3, rng)
    a, b = rng.normal(size=(15, 3)), rng.normal(size=(15, 5))
    ref = dirichlet_energy(b, g) / dirichlet_energy(a, g)
    assert de_ratio(a, b, full_edge_set(g)) == pytest.approx(ref, rel=1e-12)


def test_de_ratio_of_constant_input_is_finite(rng):
    g = random_graph(10, 0.4, rng)
    r = de_ratio(np.ones((10, 2)), rng.normal(size=(10, 2)), full_edge_set(g))
    assert np.isfinite(r) and r > 1e6


# -- the full objective -----------------------------------------------------------

def tiny_instance(mu="identity"):
    rng = np.random.default_rng(11)
    g = random_graph(10, 0.4, rng)
    x = rng.normal(size=(10, 4))
    labels = rng.integers(0, 3, size=10)
    t = init_teacher("graphsage", 4, 5, 3, num_layers=2, seed=4)
    for layer in t.layers:
        layer.bias.value = 0.1 * rng.normal(size=layer.bias.shape)
    w = LossWeights(lam=0.6, beta=0.3, eta=0.5, zeta=None, mu=mu)
    es = de_edge_set(g, None, 0)
    profile = compute_teacher_profile(t, g, x, w, edge_set=es)
    soft = softmax(teacher_forward(t, g, x).logits)
    s = inject_teacher(t, w.eta, init_seed=2)
    # move away from the teacher so every term has a nonzero gradient
    for layer in s.layers:
        layer.weight.value = layer.weight.value + 0.05 * rng.normal(size=layer.weight.shape)
        layer.bias.value = layer.bias.value + 0.05 * rng.normal(size=layer.bias.shape)
    nodes = (np.array([0, 2, 5, 7]), np.arange(10))
    return s, x, soft, labels, nodes, profile, w, es


@pytest.mark.parametrize("mu", ["identity", "sqrt", "log"])
def test_total_loss_gradient(mu):
    s, x, soft, labels, nodes, profile, w, es = tiny_instance(mu)

    def build(tape):
        return total_loss(tape, s, x, soft, labels, nodes, profile, w, es).total

    tape = Tape()
    parts = total_loss(tape, s, x, soft, labels, nodes, profile, w, es)
    assert parts.ded_raw > 0 and parts.kl > 0
    tape.backward(parts.total)
    f = lambda: float(build(Tape()).value[0, 0])
    for p in s.params():
        assert_grad_close(p.grad / p.multiplier, numeric_grad(f, p.value))


def test_total_loss_decomposes_in_beta():
    s, x, soft, labels, nodes, profile, w, es = tiny_instance()
    full = total_loss(Tape(), s, x, soft, labels, nodes, profile, w, es)
    no_ded = total_loss(Tape(), s, x, soft, labels, nodes, profile, dataclasses.replace(w, beta=0.0), es)
    tape = Tape()
    l_ded = float(ded_loss(tape, student_graph(tape, s, x).trace, profile, es).value[0, 0])
    diff = float(full.total.value[0, 0]) - float(no_ded.total.value[0, 0])
    assert abs(diff - w.beta * l_ded) <= 1e-10 * abs(w.beta * l_ded)
    assert no_ded.ded == 0.0


def test_ded_loss_zero_when_student_mirrors_profile():
    s, x, soft, labels, nodes, profile, w, es = tiny_instance()
    tape = Tape()
    trace = student_graph(tape, s, x).trace
    own = DERatioProfile([e.op for e in trace], np.array([de_ratio(e.input.value, e.output.value, es) for e in trace]),
                         np.array([de_ratio(e.input.value, e.output.value, es) for e in trace]))
    assert float(ded_loss(tape, trace, own, es).value[0, 0]) == pytest.approx(0.0, abs=1e-20)


# -- training behaviour -------------------------------------------------------------

def test_teacher_learns(small, small_teacher):
    b = small
    assert evaluate(small_teacher, b.graph, b.features, b.labels, b.split.unlabeled) > 0.8


def test_beta_zero_ded_identically_zero(small, small_teacher):
    b = small
    w = LossWeights(lam=0.5, beta=0.0, eta=0.5)
    res = distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=1)
    assert all(h["ded"] == 0.0 and h["ded_raw"] == 0.0 for h in res.history)


def test_no_injection_no_distillation_is_plain_mlp(small, small_teacher):
    b = small
    w = LossWeights(lam=0.0, beta=0.0, eta=1.0)
    a = distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=7, inject=False)
    m = train_mlp(student_dims(small_teacher), b.graph, b.features, b.labels, b.split, FAST, seed=7)
    assert a.history == m.history
    for p, q in zip(a.model.params(), m.model.params()):
        assert p.value.tobytes() == q.value.tobytes()


def test_eta_zero_freezes_injected_parameters(small, small_teacher):
    b = small
    w = LossWeights(lam=0.5, beta=0.1, eta=0.0)
    s = inject_teacher(small_teacher, 0.0, init_seed=0)
    view = training_view(b.graph, b.features, b.labels, b.split)
    soft = softmax(teacher_forward(small_teacher, view.graph, view.x).logits)
    es = de_edge_set(view.graph, w.zeta, 0)
    profile = compute_teacher_profile(small_teacher, view.graph, view.x, w, edge_set=es)
    before = [p.value.copy() for p in s.params()]
    opt = Adam(s.params(), lr=0.01, weight_decay=5e-4)
    for _ in range(100):
        tape = Tape()
        tape.backward(total_loss(tape, s, view.x, soft, view.labels, view, profile, w, es).total)
        opt.step()
    i = 0
    for layer in s.layers:
        for p in layer.params():
            if layer.role is Role.FT_INJECTED:
                assert p.value.tobytes() == before[i].tobytes()
            elif p.name.startswith("W"):
                assert not np.array_equal(p.value, before[i])
            i += 1


def test_zeta_one_equals_full_edges_bitwise(small, small_teacher):
    b = small
    runs = []
    for zeta in (1.0, None):
        w = LossWeights(lam=0.5, beta=0.5, eta=0.5, zeta=zeta)
        runs.append(distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=2))
    assert runs[0].history == runs[1].history
    for p, q in zip(runs[0].model.params(), runs[1].model.params()):
        assert p.value.tobytes() == q.value.tobytes()


def test_zeta_sampling_runs(small, small_teacher):
    b = small
    w = LossWeights(zeta=0.4, mu="sqrt")
    res = distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=2)
    assert np.isfinite([h["loss"] for h in res.history]).all()


def test_training_is_deterministic(small, small_teacher):
    b = small
    w = LossWeights(mu="log")
    a = distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=4)
    c = distill_student(small_teacher, b.graph, b.features, b.labels, b.split, w, FAST, seed=4)
    assert a.history == c.history


def test_best_checkpoint_prefers_later_epoch_on_ties():
    from tined.autodiff import Param

    p = Param([[0.0]])
    vals = iter([0.5, 0.7, 0.7, 0.6])  # epoch 0 .. 3

    def step(epoch):
        p.grad = np.array([[1.0]])
        return {"loss": 1.0}

    hist, best_epoch, best_val = _fit(None, [p], step, lambda: (0.0, next(vals)), TrainConfig(max_epochs=3))
    assert best_epoch == 2 and best_val == 0.7


def test_divergence_raises_training_error():
    from tined.autodiff import Param

    p = Param([[0.0]])
    with pytest.raises(TrainingError) as exc:
        _fit(None, [p], lambda e: {"loss": float("nan")}, lambda: (0.0, 0.0), TrainConfig(max_epochs=3))
    assert exc.value.epoch == 1


# -- production protocol ------------------------------------------------------------

@pytest.fixture(scope="module")
def prod():
    b = generate_sbm(n=80, blocks=2, p_in=0.2, p_out=0.02, feature_dim=6, class_shift=1.5, seed=5,
                     labels_per_class=5, val_per_class=5)
    return b.with_split(make_production_split(b.split, seed=5))


def _run_prod(b, features, labels, graph):
    t = train_teacher("gcn", graph, features, labels, b.split, FAST, seed=0)
    s = distill_student(t.model, graph, features, labels, b.split, LossWeights(), FAST, seed=0)
    return t, s


def test_production_audit_never_touches_inductive_nodes(prod):
    b = prod
    with audit_access() as audit:
        _run_prod(b, b.features, b.labels, b.graph)
    touched = audit.touched(b.split.inductive)
    assert touched == {"features": [], "labels": [], "edges": [], "soft_labels": []}
    assert audit.reads["features"]  # the harness did observe the run


def test_production_ignores_poisoned_inductive_data(prod):
    b = prod
    ind = b.split.inductive
    x = b.features.copy()
    x[ind] = np.nan
    y = b.labels.copy()
    y[ind] = (y[ind] + 1) % 2
    extra = [(int(i), int(j)) for i in ind for j in b.split.labeled[:3]]
    from tined.graph import Graph

    g = Graph.from_edges(b.graph.n, np.vstack([b.graph.edges, extra]))
    t1, s1 = _run_prod(b, b.features, b.labels, b.graph)
    t2, s2 = _run_prod(b, x, y, g)
    assert s1.history == s2.history
    for p, q in zip(s1.model.params(), s2.model.params()):
        assert p.value.tobytes() == q.value.tobytes()


def test_production_kl_nodes_exclude_inductive(prod):
    view = training_view(prod.graph, prod.features, prod.labels, prod.split)
    glob = view.nodes[view.kl_nodes]
    assert set(glob) == set(prod.split.labeled) | set(prod.split.observed)
    assert view.graph.n == prod.graph.n - len(prod.split.inductive)


def test_prod_metric_is_size_weighted(prod):
    b = prod
    _, s = _run_prod(b, b.features, b.labels, b.graph)
    m = production_metrics(s.model, None, b.features, b.labels, b.split)
    logits = b.features
    for layer in s.model.layers:
        logits = np.maximum(logits @ layer.weight.value + layer.bias.value, 0) if layer.activation == "relu" \
            else logits @ layer.weight.value + layer.bias.value
    pred = logits.argmax(1)
    ind = np.mean(pred[b.split.inductive] == b.labels[b.split.inductive])
    tran = np.mean(pred[b.split.observed] == b.labels[b.split.observed])
    ni, no = len(b.split.inductive), len(b.split.observed)
    assert abs(m["prod"] - (ni * ind + no * tran) / (ni + no)) <= 1e-12
    assert m["ind"] == ind and m["tran"] == tran
