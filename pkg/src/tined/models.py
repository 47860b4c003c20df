"""Teacher GNNs as explicit (GP, FT) operation pairs, the student MLP, and teacher injection."""

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Param, Tape
from .errors import ShapeError
from .graph import LaplacianKind, closed_mean_aggregator, mean_aggregator, propagation_matrix


class TeacherKind(str, enum.Enum):
    GRAPHSAGE = "graphsage"
    GCN = "gcn"
    GAT = "gat"
    APPNP = "appnp"

    @property
    def layerwise(self):
        return self is not TeacherKind.APPNP


class Role(str, enum.Enum):
    GP_EMULATING = "gp"
    FT_INJECTED = "ft"
    PLAIN = "plain"


@dataclass
class FTLayer:
    """One feature transformation ``sigma(H W + b)``; GAT layers also hold a (2d, 1) attention column."""

    weight: Param
    bias: Param
    attention: Param | None = None

    def params(self):
        return [p for p in (self.weight, self.bias, self.attention) if p is not None]


@dataclass
class TeacherModel:
    kind: TeacherKind
    layers: list
    slope: float = 0.2
    alpha: float = 0.1
    prop_steps: int = 10
    dropout: float = 0.0
    norm: str = "none"
    aggregator: str = "mean_concat"  # GraphSAGE only: "mean_concat" or "gcn"

    @property
    def concat_gp(self):
        return self.kind is TeacherKind.GRAPHSAGE and self.aggregator == "mean_concat"

    @property
    def in_dim(self):
        w = self.layers[0].weight.shape[0]
        return w // 2 if self.concat_gp else w

    @property
    def out_dim(self):
        return self.layers[-1].weight.shape[1]

    def op_names(self):
        if self.kind.layerwise:
            return [f"{op}{l}" for l in range(1, len(self.layers) + 1) for op in ("GP", "FT")]
        return [f"FT{l}" for l in range(1, len(self.layers) + 1)] + ["GP"]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]


@dataclass
class FCLayer:
    weight: Param
    bias: Param
    role: Role
    activation: str = "relu"

    def params(self):
        return [self.weight, self.bias]


@dataclass
class StudentMLP:
    layers: list

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[0]


@dataclass
class TraceEntry:
    op: str
    input: object
    output: object


@dataclass
class ForwardResult:
    logits: object
    trace: list = field(default_factory=list)


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@functools.lru_cache(maxsize=64)
def graph_operators(g):
    """Propagation operators derived from ``g``; cached per graph object."""
    ids = np.arange(g.n)
    # attention entries: every edge in both directions plus a self loop per node
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1], ids])
    cols = np.concatenate([g.edges[:, 1], g.edges[:, 0], ids])
    order = np.lexsort((cols, rows))
    return {
        "mean": mean_aggregator(g),
        "normalized": propagation_matrix(g, LaplacianKind.NORMALIZED_SELF_LOOPS),
        "closed_mean": closed_mean_aggregator(g),
        "att_rows": rows[order],
        "att_cols": cols[order],
    }


def init_teacher(kind, in_dim, hidden, out_dim, num_layers=2, seed=0, **options):
    """Glorot-initialized teacher with ``num_layers`` FT layers (T1 for APPNP)."""
    kind = TeacherKind(kind)
    if options.get("aggregator", "mean_concat") not in ("mean_concat", "gcn"):
        raise ValueError(f"unknown aggregator {options['aggregator']!r}")
    concat = kind is TeacherKind.GRAPHSAGE and options.get("aggregator", "mean_concat") == "mean_concat"
    rng = np.random.default_rng(seed)
    widths = [in_dim] + [hidden] * (num_layers - 1) + [out_dim]
    layers = []
    for l in range(num_layers):
        d_in, d_out = widths[l], widths[l + 1]
        rows = 2 * d_in if concat else d_in
        w = Param(glorot(rng, rows, d_out), name=f"W{l + 1}")
        b = Param(np.zeros((1, d_out)), name=f"b{l + 1}")
        a = Param(glorot(rng, 2 * d_out, 1), name=f"a{l + 1}") if kind is TeacherKind.GAT else None
        layers.append(FTLayer(w, b, a))
    return TeacherModel(kind=kind, layers=layers, **options)


def _ft(tape, h, layer, last):
    out = tape.linear(h, tape.param(layer.weight), tape.param(layer.bias))
    return out if last else tape.relu(out)


def _check_width(kind, l, h, expected):
    if h.shape[1] != expected:
        raise ShapeError(f"{kind.value} layer {l}: input width {h.shape[1]} does not match weight rows {expected}")


def teacher_graph(tape, t, g, x, train=False, rng=None):
    """Build the teacher forward pass on ``tape``; returns a ForwardResult of tape nodes."""
    x = tape._lift(x)
    if x.shape[0] != g.n:
        raise ShapeError(f"features have {x.shape[0]} rows but graph has {g.n} nodes")
    ops = graph_operators(g)
    trace = []
    h = x
    T = len(t.layers)

    def drop(node):
        if not train or t.dropout <= 0:
            return node
        keep = 1.0 - t.dropout
        mask = (rng.random(node.shape) < keep) / keep
        return tape.mul(node, tape.constant(mask))

    if t.kind.layerwise:
        for l, layer in enumerate(t.layers, start=1):
            last = l == T
            h = drop(h)
            if t.concat_gp:
                _check_width(t.kind, l, h, layer.weight.shape[0] // 2)
                gp = tape.concat_cols(h, tape.sparse_propagate(ops["mean"], h))
            elif t.kind is TeacherKind.GRAPHSAGE:
                _check_width(t.kind, l, h, layer.weight.shape[0])
                gp = tape.sparse_propagate(ops["closed_mean"], h)
            elif t.kind is TeacherKind.GCN:
                _check_width(t.kind, l, h, layer.weight.shape[0])
                gp = tape.sparse_propagate(ops["normalized"], h)
            else:
                _check_width(t.kind, l, h, layer.weight.shape[0])
                gp = _gat_propagate(tape, h, layer, t.slope, ops, g.n)
            trace.append(TraceEntry(f"GP{l}", h, gp))
            out = _ft(tape, gp, layer, last)
            trace.append(TraceEntry(f"FT{l}", gp, out))
            if not last and t.norm == "layer":
                out = tape.layer_norm(out)
            h = out
        return ForwardResult(h, trace)

    for l, layer in enumerate(t.layers, start=1):
        last = l == T
        h = drop(h)
        _check_width(t.kind, l, h, layer.weight.shape[0])
        out = _ft(tape, h, layer, last)
        trace.append(TraceEntry(f"FT{l}", h, out))
        if not last and t.norm == "layer":
            out = tape.layer_norm(out)
        h = out
    z = h
    for _ in range(t.prop_steps):
        h = tape.add(tape.scale(tape.sparse_propagate(ops["normalized"], h), 1.0 - t.alpha), tape.scale(z, t.alpha))
    trace.append(TraceEntry("GP", z, h))
    return ForwardResult(h, trace)


def _gat_propagate(tape, h, layer, slope, ops, n):
    rows, cols = ops["att_rows"], ops["att_cols"]
    z = tape.matmul(h, tape.param(layer.weight))
    d = z.shape[1]
    a = tape.param(layer.attention)
    s_self = tape.matmul(z, tape.take_rows(a, np.arange(d)))
    s_nbr = tape.matmul(z, tape.take_rows(a, np.arange(d, 2 * d)))
    scores = tape.leaky_relu(tape.add(tape.take_rows(s_self, rows), tape.take_rows(s_nbr, cols)), slope)
    weights = tape.segment_softmax(scores, rows, n)
    return tape.weighted_propagate(weights, h, rows, cols, n)


def teacher_forward(t, g, x, record=False):
    """Evaluate the teacher; returns numpy logits and (optionally) per-op input/output arrays."""
    tape = Tape()
    res = teacher_graph(tape, t, g, x)
    trace = [TraceEntry(e.op, e.input.value, e.output.value) for e in res.trace] if record else []
    return ForwardResult(res.logits.value, trace)


def student_graph(tape, s, x):
    x = tape._lift(x)
    trace = []
    h = x
    for i, layer in enumerate(s.layers, start=1):
        if h.shape[1] != layer.weight.shape[0]:
            raise ShapeError(f"student layer {i}: input width {h.shape[1]} does not match weight rows {layer.weight.shape[0]}")
        out = tape.linear(h, tape.param(layer.weight), tape.param(layer.bias))
        if layer.activation == "relu":
            out = tape.relu(out)
        trace.append(TraceEntry(f"FC{i}", h, out))
        h = out
    return ForwardResult(h, trace)


def student_forward(s, x, record=False):
    tape = Tape()
    res = student_graph(tape, s, x)
    trace = [TraceEntry(e.op, e.input.value, e.output.value) for e in res.trace] if record else []
    return ForwardResult(res.logits.value, trace)


def apply_fc(layer, h):
    """One FC layer on a numpy array, outside any tape."""
    out = h @ layer.weight.value + layer.bias.value
    return np.maximum(out, 0.0) if layer.activation == "relu" else out


def apply_teacher_ft(t, l, h):
    """Teacher FT of layer ``l`` (1-based) on a numpy array."""
    layer = t.layers[l - 1]
    out = h @ layer.weight.value + layer.bias.value
    return out if l == len(t.layers) else np.maximum(out, 0.0)


def _skeleton(t):
    """(in, out, role, activation) for each student layer; activation of GP layers is a placeholder."""
    layout = []
    T = len(t.layers)
    if t.kind.layerwise:
        for l, layer in enumerate(t.layers, start=1):
            rows = layer.weight.shape[0]
            d_in = rows // 2 if t.concat_gp else rows
            layout.append((d_in, rows, Role.GP_EMULATING, None))
            layout.append((rows, layer.weight.shape[1], Role.FT_INJECTED, "identity" if l == T else "relu"))
    else:
        for l, layer in enumerate(t.layers, start=1):
            layout.append((layer.weight.shape[0], layer.weight.shape[1], Role.FT_INJECTED, "identity" if l == T else "relu"))
        k = t.out_dim
        layout.append((k, k, Role.GP_EMULATING, "identity"))
    return layout


def inject_teacher(t, eta, init_seed, gp_activation="relu"):
    """Student whose FT-injected layers are verbatim copies of the teacher FTs.

    Injected layers get gradient multiplier ``eta``; GP-emulating layers are
    Glorot-initialized from ``init_seed`` with multiplier 1.
    """
    rng = np.random.default_rng(init_seed)
    fts = iter(t.layers)
    layers = []
    for d_in, d_out, role, act in _skeleton(t):
        if role is Role.FT_INJECTED:
            src = next(fts)
            w = Param(src.weight.value.copy(), multiplier=eta, name=f"W{len(layers) + 1}")
            b = Param(src.bias.value.copy(), multiplier=eta, name=f"b{len(layers) + 1}")
        else:
            act = act or gp_activation
            w = Param(glorot(rng, d_in, d_out), name=f"W{len(layers) + 1}")
            b = Param(np.zeros((1, d_out)), name=f"b{len(layers) + 1}")
        layers.append(FCLayer(w, b, role, act))
    return StudentMLP(layers)


def plain_mlp(dims, seed, activations=None):
    """Glorot MLP with ReLU on every layer but the last."""
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        act = activations[i] if activations else ("identity" if i == len(dims) - 2 else "relu")
        w = Param(glorot(rng, dims[i], dims[i + 1]), name=f"W{i + 1}")
        b = Param(np.zeros((1, dims[i + 1])), name=f"b{i + 1}")
        layers.append(FCLayer(w, b, Role.PLAIN, act))
    return StudentMLP(layers)


def student_dims(t):
    layout = _skeleton(t)
    return [layout[0][0]] + [s[1] for s in layout]


def uninjected_student(t, init_seed, gp_activation="relu"):
    """The student skeleton with every layer randomly initialized (no teacher injection)."""
    layout = _skeleton(t)
    acts = [a or gp_activation for _, _, _, a in layout]
    s = plain_mlp(student_dims(t), init_seed, acts)
    for layer, (_, _, role, _) in zip(s.layers, layout):
        layer.role = role
    return s
