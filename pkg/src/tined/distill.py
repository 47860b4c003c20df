"""Losses, DE-ratio bookkeeping, and the teacher / student / baseline training loops."""

import contextlib
import contextvars
import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .autodiff import Adam, Tape
from .config import LossWeights, TeacherConfig, TrainConfig
from .errors import DataError, DomainError, ShapeError, TrainingError
from .graph import edge_sum, full_edge_set, induced_subgraph, sample_edges
from .models import (
    TeacherKind,
    apply_fc,
    init_teacher,
    inject_teacher,
    plain_mlp,
    student_forward,
    student_graph,
    teacher_forward,
    teacher_graph,
    uninjected_student,
)

DE_EPS = 1e-12
MU_EPS = 1e-12


# -- access audit -------------------------------------------------------------

class AccessAudit:
    """Records which global node ids had their features, labels, edges or soft labels read."""

    def __init__(self):
        self.reads = {"features": set(), "labels": set(), "edges": set(), "soft_labels": set()}

    def record(self, what, ids):
        self.reads[what].update(int(i) for i in np.asarray(ids).ravel())

    def touched(self, ids):
        ids = {int(i) for i in ids}
        return {what: sorted(seen & ids) for what, seen in self.reads.items()}


_audit = contextvars.ContextVar("tined_audit", default=None)


@contextlib.contextmanager
def audit_access():
    audit = AccessAudit()
    token = _audit.set(audit)
    try:
        yield audit
    finally:
        _audit.reset(token)


def read_rows(array, ids, what):
    audit = _audit.get()
    if audit is not None:
        audit.record(what, ids)
    return np.asarray(array)[ids]


@dataclass
class TrainingView:
    """The part of a dataset a training run is allowed to see, reindexed to local ids."""

    graph: object
    x: np.ndarray
    labels: np.ndarray
    nodes: np.ndarray  # global id of each local node
    labeled: np.ndarray
    validation: np.ndarray
    kl_nodes: np.ndarray


def training_view(g, x, labels, split):
    """Transductive: the whole graph. Production: the graph induced on non-inductive nodes."""
    if split.production:
        nodes = split.observed_nodes()
        audit = _audit.get()
        if audit is not None:
            audit.record("edges", nodes)
        sub = induced_subgraph(g, nodes)
        local = lambda ids: np.searchsorted(nodes, ids)
        kl = local(np.sort(np.concatenate([split.labeled, split.observed])))
    else:
        nodes = np.arange(g.n)
        sub = g
        local = lambda ids: np.asarray(ids, dtype=np.int64)
        kl = nodes
        audit = _audit.get()
        if audit is not None:
            audit.record("edges", nodes)
    xv = read_rows(x, nodes, "features")
    yv = read_rows(labels, nodes, "labels")
    return TrainingView(sub, xv, yv, nodes, local(split.labeled), local(split.validation), kl)


# -- losses -------------------------------------------------------------------

def ce_loss(tape, logits, labels, nodes):
    """Mean cross-entropy over ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise DomainError("cross-entropy over an empty node set")
    labels = np.asarray(labels, dtype=np.int64)
    ls = tape.log_softmax(tape.take_rows(logits, nodes))
    picked = tape.pick(ls, np.arange(len(nodes)), labels[nodes])
    return tape.scale(tape.sum(picked), -1.0 / len(nodes))


def check_distribution(z):
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise DataError("soft labels must be finite and nonnegative")
    if np.any(np.abs(z.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("soft label rows must sum to 1 within 1e-6")
    return z


def kl_loss(tape, logits, soft, nodes, temperature=1.0):
    """Mean over ``nodes`` of KL(z_v || softmax(logits_v / temperature)); ``soft`` is constant."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise DomainError("KL divergence over an empty node set")
    z = check_distribution(np.asarray(soft)[nodes])
    sel = tape.take_rows(logits, nodes)
    if temperature != 1.0:
        sel = tape.scale(sel, 1.0 / temperature)
    ls = tape.log_softmax(sel)
    cross = tape.sum(tape.mul(tape.constant(z), ls))
    entropy = float(np.sum(xlogy(z, z)))
    return tape.scale(tape.add(cross, tape.constant(-entropy)), -1.0 / len(nodes))


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# -- DE ratios ----------------------------------------------------------------

@dataclass
class DERatioProfile:
    ops: list
    ratios: np.ndarray
    transformed: np.ndarray
    mu: str = "identity"

    def __len__(self):
        return len(self.ops)

    def to_dict(self):
        return {"ops": list(self.ops), "ratios": self.ratios.tolist(), "transformed": self.transformed.tolist(), "mu": self.mu}


def mu_value(r, mu):
    if mu == "identity":
        return r
    if mu == "sqrt":
        return math.sqrt(r + MU_EPS)
    if mu == "log":
        return math.log(r + MU_EPS)
    raise ValueError(f"unknown mu {mu!r}")


def mu_node(tape, r, mu):
    if mu == "identity":
        return r
    shifted = tape.add(r, tape.constant(MU_EPS))
    return tape.sqrt(shifted) if mu == "sqrt" else tape.log(shifted)


def de_edge_set(g, zeta, seed):
    """Edges used for every DE of one run: all of them, or one seeded sample when zeta is set."""
    if zeta is None:
        return full_edge_set(g)
    return sample_edges(g, zeta, seed)


def de_ratio(h_in, h_out, edge_set):
    """E(out) / max(E(in), 1e-12). Both energies share the normalizer, so it cancels."""
    s_in = edge_sum(np.asarray(h_in), edge_set)
    s_out = edge_sum(np.asarray(h_out), edge_set)
    return s_out / max(s_in, DE_EPS * edge_set.n_norm)


def de_ratio_node(tape, h_in, h_out, edge_set):
    s_in = tape.trace_quadratic_de(h_in, edge_set, normalizer=1)
    s_out = tape.trace_quadratic_de(h_out, edge_set, normalizer=1)
    floor = DE_EPS * edge_set.n_norm
    if s_in.value[0, 0] < floor:
        s_in = tape.constant(floor)
    return tape.div(s_out, s_in)


def profile_from_trace(trace, edge_set, mu):
    ratios = np.array([de_ratio(e.input, e.output, edge_set) for e in trace])
    transformed = np.array([mu_value(r, mu) for r in ratios])
    return DERatioProfile([e.op for e in trace], ratios, transformed, mu)


def compute_teacher_profile(t, g, x, weights=None, seed=0, edge_set=None):
    """DE ratio of every teacher GP/FT operation, in execution order."""
    weights = weights or LossWeights()
    if edge_set is None:
        edge_set = de_edge_set(g, weights.zeta, seed)
    trace = teacher_forward(t, g, x, record=True).trace
    return profile_from_trace(trace, edge_set, weights.mu)


def compute_student_profile(s, g, x, weights=None, seed=0, edge_set=None):
    weights = weights or LossWeights()
    if edge_set is None:
        edge_set = de_edge_set(g, weights.zeta, seed)
    trace = student_forward(s, x, record=True).trace
    return profile_from_trace(trace, edge_set, weights.mu)


def ded_loss(tape, trace, profile, edge_set, mu=None):
    """Sum over aligned (teacher op, student layer) pairs of squared mu-ratio differences."""
    mu = mu or profile.mu
    if len(trace) != len(profile):
        raise ShapeError(f"student trace has {len(trace)} ops, teacher profile has {len(profile)}")
    total = None
    for entry, target in zip(trace, profile.transformed):
        r = mu_node(tape, de_ratio_node(tape, entry.input, entry.output, edge_set), mu)
        term = tape.square(tape.sub(r, tape.constant(target)))
        total = term if total is None else tape.add(total, term)
    return total


@dataclass
class LossParts:
    total: object
    ce: float
    kl: float
    ded: float
    ded_raw: float


def total_loss(tape, student, x, soft, labels, view_or_nodes, profile, weights, edge_set):
    """CE on labeled nodes + lam * KL on the distillation nodes + beta * DED.

    ``view_or_nodes`` is a :class:`TrainingView` or a ``(labeled, kl_nodes)`` pair.
    Terms with zero weight are not built.
    """
    if isinstance(view_or_nodes, TrainingView):
        labeled, kl_nodes = view_or_nodes.labeled, view_or_nodes.kl_nodes
    else:
        labeled, kl_nodes = view_or_nodes
    res = student_graph(tape, student, x)
    loss = ce_loss(tape, res.logits, labels, labeled)
    ce = float(loss.value[0, 0])
    kl = ded = ded_raw = 0.0
    if weights.lam > 0:
        term = kl_loss(tape, res.logits, soft, kl_nodes, weights.temperature)
        kl = weights.lam * float(term.value[0, 0])
        loss = tape.add(loss, tape.scale(term, weights.lam))
    if weights.beta > 0:
        term = ded_loss(tape, res.trace, profile, edge_set, weights.mu)
        ded_raw = float(term.value[0, 0])
        ded = weights.beta * ded_raw
        loss = tape.add(loss, tape.scale(term, weights.beta))
    return LossParts(loss, ce, kl, ded, ded_raw)


# -- evaluation ---------------------------------------------------------------

def accuracy_from_logits(logits, labels, nodes):
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise DomainError("accuracy over an empty node set")
    pred = np.argmax(np.asarray(logits)[nodes], axis=1)  # first maximum wins ties
    return float(np.mean(pred == np.asarray(labels)[nodes]))


def model_logits(model, g, x):
    if hasattr(model, "kind"):
        if g is None:
            raise ValueError("a teacher GNN needs a graph to evaluate")
        return teacher_forward(model, g, x).logits
    return mlp_logits(model, x)


def mlp_logits(s, x):
    h = np.asarray(x, dtype=np.float64)
    for layer in s.layers:
        h = apply_fc(layer, h)
    return h


def evaluate(model, g, x, labels, nodes):
    """Accuracy of ``model`` (teacher with graph, or student with ``g=None``) on ``nodes``."""
    return accuracy_from_logits(model_logits(model, g, x), labels, nodes)


def production_metrics(model, g, x, labels, split):
    """ind / tran accuracy and their size-weighted average prod."""
    logits = model_logits(model, g, x)
    ind = accuracy_from_logits(logits, labels, split.inductive)
    tran = accuracy_from_logits(logits, labels, split.observed)
    ni, no = len(split.inductive), len(split.observed)
    return {"ind": ind, "tran": tran, "prod": (ni * ind + no * tran) / (ni + no)}


def heldout_metrics(model, g, x, labels, split):
    if split.production:
        return production_metrics(model, g, x, labels, split)
    return {"test": evaluate(model, g, x, labels, split.unlabeled)}


# -- training loops -----------------------------------------------------------

@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("-inf")
    profile: DERatioProfile | None = None
    soft_labels: np.ndarray | None = None
    view: TrainingView | None = None


def _snapshot(params):
    return [p.value.copy() for p in params]


def _restore(params, values):
    for p, v in zip(params, values):
        p.value = v


def _fit(model, params, step_loss, accuracies, config):
    """Full-batch Adam with best-validation checkpointing; epoch 0 is the initialization.

    ``accuracies()`` returns ``(train_acc, val_acc)``; ties on validation accuracy go
    to the later epoch.
    """
    opt = Adam(params, lr=config.lr, betas=config.betas, eps=config.eps, weight_decay=config.weight_decay)
    best_val = accuracies()[1]
    best = _snapshot(params)
    best_epoch = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        record = step_loss(epoch)
        if not math.isfinite(record["loss"]):
            raise TrainingError(f"loss became {record['loss']} at epoch {epoch}", epoch=epoch)
        opt.step()
        train_acc, val_acc = accuracies()
        record = {"epoch": epoch, **record, "train_acc": train_acc, "val_acc": val_acc}
        history.append(record)
        if val_acc >= best_val:
            best_val, best, best_epoch = val_acc, _snapshot(params), epoch
    _restore(params, best)
    return history, best_epoch, best_val


def _mlp_accuracies(s, view):
    idx = np.concatenate([view.labeled, view.validation])
    x_sub = view.x[idx]
    y_sub = view.labels[idx]
    n_lab = len(view.labeled)

    def accuracies():
        logits = mlp_logits(s, x_sub)
        return (accuracy_from_logits(logits, y_sub, np.arange(n_lab)),
                accuracy_from_logits(logits, y_sub, np.arange(n_lab, len(idx))))

    return accuracies


def train_teacher(kind, g, x, labels, split, config=None, seed=0, teacher_config=None):
    """Train a GNN teacher on CE over the labeled nodes (production: on the observed graph)."""
    config = config or TrainConfig()
    tc = teacher_config or TeacherConfig(kind=TeacherKind(kind).value)
    view = training_view(g, x, labels, split)
    k = int(np.max(labels)) + 1
    t = init_teacher(
        kind, view.x.shape[1], tc.hidden, k, num_layers=tc.num_layers, seed=seed,
        slope=tc.slope, alpha=tc.alpha, prop_steps=tc.prop_steps, dropout=tc.dropout, norm=tc.norm,
        aggregator=tc.aggregator,
    )
    params = t.params()
    rng = np.random.default_rng([seed, 1])

    def step(epoch):
        tape = Tape()
        res = teacher_graph(tape, t, view.graph, view.x, train=True, rng=rng)
        loss = ce_loss(tape, res.logits, view.labels, view.labeled)
        value = float(loss.value[0, 0])
        if math.isfinite(value):
            tape.backward(loss)
        return {"loss": value, "ce": value}

    def accuracies():
        logits = teacher_forward(t, view.graph, view.x).logits
        return (accuracy_from_logits(logits, view.labels, view.labeled),
                accuracy_from_logits(logits, view.labels, view.validation))

    history, best_epoch, best_val = _fit(t, params, step, accuracies, config)
    return TrainResult(t, history, best_epoch, best_val, view=view)


def distill_student(t, g, x, labels, split, weights=None, config=None, seed=0, inject=True):
    """Distill ``t`` into an MLP with teacher injection and DE-ratio matching."""
    weights = weights or LossWeights()
    config = config or TrainConfig()
    view = training_view(g, x, labels, split)
    soft = softmax(teacher_forward(t, view.graph, view.x).logits)
    audit = _audit.get()
    if audit is not None:
        audit.record("soft_labels", view.nodes[view.kl_nodes])
    edge_set = de_edge_set(view.graph, weights.zeta, seed)
    profile = compute_teacher_profile(t, view.graph, view.x, weights, seed, edge_set=edge_set)
    if inject:
        s = inject_teacher(t, weights.eta, init_seed=seed, gp_activation=config.gp_activation)
    else:
        s = uninjected_student(t, init_seed=seed, gp_activation=config.gp_activation)
    params = s.params()
    accuracies = _mlp_accuracies(s, view)

    def step(epoch):
        tape = Tape()
        parts = total_loss(tape, s, view.x, soft, view.labels, view, profile, weights, edge_set)
        value = float(parts.total.value[0, 0])
        if math.isfinite(value):
            tape.backward(parts.total)
        return {"loss": value, "ce": parts.ce, "kl": parts.kl, "ded": parts.ded, "ded_raw": parts.ded_raw}

    history, best_epoch, best_val = _fit(s, params, step, accuracies, config)
    return TrainResult(s, history, best_epoch, best_val, profile=profile, soft_labels=soft, view=view)


def train_mlp(dims, g, x, labels, split, config=None, seed=0, activations=None):
    """Plain MLP baseline trained on CE over the labeled nodes only."""
    config = config or TrainConfig()
    view = training_view(g, x, labels, split)
    s = plain_mlp(dims, seed, activations)
    params = s.params()
    accuracies = _mlp_accuracies(s, view)

    def step(epoch):
        tape = Tape()
        logits = student_graph(tape, s, view.x).logits
        loss = ce_loss(tape, logits, view.labels, view.labeled)
        value = float(loss.value[0, 0])
        if math.isfinite(value):
            tape.backward(loss)
        # same record layout as distillation so trajectories compare directly
        return {"loss": value, "ce": value, "kl": 0.0, "ded": 0.0, "ded_raw": 0.0}

    history, best_epoch, best_val = _fit(s, params, step, accuracies, config)
    return TrainResult(s, history, best_epoch, best_val, view=view)


def clone_teacher(t):
    return copy.deepcopy(t)
