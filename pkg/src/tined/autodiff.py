"""A small tape-based reverse-mode differentiator over numpy matrices.

Every value on the tape is a 2-D float64 array; scalars are 1x1. The op set is
closed: exactly what the teacher GNNs, the student MLP and the distillation
losses need. Parameters carry a gradient multiplier that is applied once, at the
end of :meth:`Tape.backward`, so ``Param.grad`` holds ``multiplier * dLoss/dParam``.
"""

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ShapeError

DIV_EPS = 1e-12


class Param:
    """A trainable matrix with its gradient buffer and gradient multiplier."""

    def __init__(self, value, multiplier=1.0, name=""):
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(1, -1)
        if multiplier < 0:
            raise ValueError("gradient multiplier must be nonnegative")
        self.value = value
        self.grad = np.zeros_like(value)
        self.multiplier = float(multiplier)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape}, multiplier={self.multiplier})"


class Node:
    __slots__ = ("id", "value", "parents", "vjp", "kind", "requires_grad")

    def __init__(self, id, value, parents, vjp, kind, requires_grad):
        self.id = id
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.kind = kind
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.id}, {self.kind}, shape={self.value.shape})"


def _as2d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, -1)
    return x


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


class Tape:
    """Append-only record of a forward computation."""

    def __init__(self):
        self.nodes = []
        self._param_nodes = {}
        self._params = []

    # -- leaves -------------------------------------------------------------

    def constant(self, value):
        return self._push(_as2d(value).copy(), (), None, "const", False)

    def param(self, p):
        """Leaf node for ``p``; the same Param always maps to the same node."""
        node = self._param_nodes.get(id(p))
        if node is None:
            node = self._push(p.value, (), None, "param", True)
            self._param_nodes[id(p)] = node
            self._params.append((p, node))
        return node

    def _push(self, value, parents, vjp, kind, requires_grad=None):
        if requires_grad is None:
            requires_grad = any(q.requires_grad for q in parents)
        node = Node(len(self.nodes), value, parents, vjp, kind, requires_grad)
        self.nodes.append(node)
        return node

    def _lift(self, x):
        return x if isinstance(x, Node) else self.constant(x)

    # -- linear algebra -----------------------------------------------------

    def matmul(self, x, w):
        x, w = self._lift(x), self._lift(w)
        if x.shape[1] != w.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {x.shape} by {w.shape}")
        xv, wv = x.value, w.value
        return self._push(xv @ wv, (x, w), lambda g: (g @ wv.T, xv.T @ g), "matmul")

    def linear(self, x, w, b=None):
        """x W + b with b a 1 x d row broadcast over rows."""
        out = self.matmul(x, w)
        if b is None:
            return out
        b = self._lift(b)
        if b.shape != (1, out.shape[1]):
            raise ShapeError(f"linear: bias shape {b.shape} does not match output width {out.shape[1]}")
        return self.add(out, b)

    def add(self, a, b):
        a, b = self._lift(a), self._lift(b)
        try:
            value = a.value + b.value
        except ValueError:
            raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
        sa, sb = a.shape, b.shape
        return self._push(value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")

    def sub(self, a, b):
        a, b = self._lift(a), self._lift(b)
        _same_shape("sub", a, b)
        return self._push(a.value - b.value, (a, b), lambda g: (g, -g), "sub")

    def mul(self, a, b):
        """Elementwise product of equal shapes, or a 1x1 node times anything."""
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        if a.shape != b.shape and a.shape != (1, 1) and b.shape != (1, 1):
            raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
        sa, sb = a.shape, b.shape

        def vjp(g):
            ga = g * bv
            gb = g * av
            if sa == (1, 1) and g.shape != (1, 1):
                ga = np.sum(ga).reshape(1, 1)
            if sb == (1, 1) and g.shape != (1, 1):
                gb = np.sum(gb).reshape(1, 1)
            return ga, gb

        return self._push(av * bv, (a, b), vjp, "mul")

    def scale(self, x, c):
        """Multiply by a fixed python scalar."""
        x = self._lift(x)
        c = float(c)
        return self._push(x.value * c, (x,), lambda g: (g * c,), "scale")

    def div(self, a, b):
        a, b = self._lift(a), self._lift(b)
        if a.shape != b.shape and b.shape != (1, 1):
            raise ShapeError(f"div: shapes {a.shape} and {b.shape} differ")
        av, bv = a.value, b.value
        if np.any(np.abs(bv) < DIV_EPS):
            raise DomainError(f"div (node {len(self.nodes)}): denominator magnitude below {DIV_EPS}")
        out = av / bv
        sb = b.shape

        def vjp(g):
            gb = -g * out / bv
            if sb == (1, 1) and g.shape != (1, 1):
                gb = np.sum(gb).reshape(1, 1)
            return g / bv, gb

        return self._push(out, (a, b), vjp, "div")

    def square(self, x):
        x = self._lift(x)
        xv = x.value
        return self._push(xv * xv, (x,), lambda g: (2.0 * g * xv,), "square")

    def sqrt(self, x):
        x = self._lift(x)
        if np.any(x.value <= 0):
            raise DomainError(f"sqrt (node {len(self.nodes)}): input must be strictly positive")
        out = np.sqrt(x.value)
        return self._push(out, (x,), lambda g: (0.5 * g / out,), "sqrt")

    def log(self, x):
        x = self._lift(x)
        if np.any(x.value <= 0):
            raise DomainError(f"log (node {len(self.nodes)}): input must be strictly positive")
        xv = x.value
        return self._push(np.log(xv), (x,), lambda g: (g / xv,), "log")

    def sum(self, x):
        x = self._lift(x)
        shape = x.shape
        return self._push(np.sum(x.value).reshape(1, 1), (x,), lambda g: (np.full(shape, g[0, 0]),), "sum")

    def mean(self, x):
        x = self._lift(x)
        return self.scale(self.sum(x), 1.0 / x.value.size)

    def row_sum(self, x):
        x = self._lift(x)
        shape = x.shape
        return self._push(x.value.sum(axis=1, keepdims=True), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "row_sum")

    # -- activations and row-wise ops --------------------------------------

    def relu(self, x):
        x = self._lift(x)
        mask = x.value > 0
        return self._push(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")

    def leaky_relu(self, x, slope=0.2):
        x = self._lift(x)
        factor = np.where(x.value > 0, 1.0, slope)
        return self._push(x.value * factor, (x,), lambda g: (g * factor,), "leaky_relu")

    def identity(self, x):
        return self._lift(x)

    def concat_cols(self, x, y):
        x, y = self._lift(x), self._lift(y)
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"concat_cols: row counts {x.shape[0]} and {y.shape[0]} differ")
        k = x.shape[1]
        return self._push(np.concatenate([x.value, y.value], axis=1), (x, y), lambda g: (g[:, :k], g[:, k:]), "concat_cols")

    def row_softmax(self, x):
        x = self._lift(x)
        z = x.value - x.value.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)
        return self._push(s, (x,), lambda g: (s * (g - np.sum(g * s, axis=1, keepdims=True)),), "row_softmax")

    def log_softmax(self, x):
        x = self._lift(x)
        z = x.value - x.value.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
        out = z - lse
        s = np.exp(out)
        return self._push(out, (x,), lambda g: (g - s * g.sum(axis=1, keepdims=True),), "log_softmax")

    def layer_norm(self, x, eps=1e-5):
        """Row-wise standardization without affine parameters."""
        x = self._lift(x)
        d = x.shape[1]
        mu = x.value.mean(axis=1, keepdims=True)
        xc = x.value - mu
        var = (xc * xc).mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = xc * inv

        def vjp(g):
            return (inv * (g - g.mean(axis=1, keepdims=True) - y * (g * y).sum(axis=1, keepdims=True) / d),)

        return self._push(y, (x,), vjp, "layer_norm")

    def take_rows(self, x, idx):
        x = self._lift(x)
        idx = np.asarray(idx, dtype=np.int64)
        shape = x.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return self._push(x.value[idx], (x,), vjp, "take_rows")

    def pick(self, x, idx, cols):
        """Column ``cols[i]`` of row ``idx[i]``, as an (len(idx), 1) column."""
        x = self._lift(x)
        idx = np.asarray(idx, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        shape = x.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, (idx, cols), g[:, 0])
            return (out,)

        return self._push(x.value[idx, cols].reshape(-1, 1), (x,), vjp, "pick")

    # -- graph ops ----------------------------------------------------------

    def sparse_propagate(self, op, x):
        """``op @ x`` for a fixed (constant) sparse or dense propagation operator."""
        x = self._lift(x)
        if op.shape[1] != x.shape[0]:
            raise ShapeError(f"sparse_propagate: operator {op.shape} cannot act on {x.shape}")
        opt = op.T.tocsr() if sp.issparse(op) else op.T
        out = np.asarray(op @ x.value)
        return self._push(out, (x,), lambda g: (np.asarray(opt @ g),), "sparse_propagate")

    def weighted_propagate(self, w, x, rows, cols, n):
        """out[i] = sum_k w[k] * x[cols[k]] over k with rows[k] = i; ``w`` is an (E, 1) node.

        This is propagation through an operator whose nonzeros are themselves tape
        values (GAT attention), so gradients flow into both ``w`` and ``x``.
        """
        w, x = self._lift(w), self._lift(x)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if w.shape != (len(rows), 1):
            raise ShapeError(f"weighted_propagate: weights {w.shape} for {len(rows)} entries")
        mat = sp.csr_matrix((w.value[:, 0], (rows, cols)), shape=(n, x.shape[0]))
        matt = mat.T.tocsr()
        xv = x.value

        def vjp(g):
            gw = np.sum(g[rows] * xv[cols], axis=1, keepdims=True)
            return gw, np.asarray(matt @ g)

        return self._push(np.asarray(mat @ xv), (w, x), vjp, "weighted_propagate")

    def segment_softmax(self, e, rows, n):
        """Softmax of an (E, 1) score column within groups sharing the same ``rows`` id."""
        e = self._lift(e)
        rows = np.asarray(rows, dtype=np.int64)
        ev = e.value[:, 0]
        gmax = np.full(n, -np.inf)
        np.maximum.at(gmax, rows, ev)
        ex = np.exp(ev - gmax[rows])
        denom = np.zeros(n)
        np.add.at(denom, rows, ex)
        s = ex / denom[rows]

        def vjp(g):
            gs = g[:, 0] * s
            tot = np.zeros(n)
            np.add.at(tot, rows, gs)
            return ((gs - s * tot[rows]).reshape(-1, 1),)

        return self._push(s.reshape(-1, 1), (e,), vjp, "segment_softmax")

    def trace_quadratic_de(self, x, edge_set, normalizer=None):
        """Dirichlet energy ``(1/n) tr(X^T L X)`` over ``edge_set``.

        ``normalizer`` overrides ``edge_set.n_norm``; pass 1 to get the raw edge sum.
        Backward is ``(2/n) L X`` computed edge by edge.
        """
        x = self._lift(x)
        n = edge_set.n_norm if normalizer is None else normalizer
        u, v = edge_set.u, edge_set.v
        xv = x.value
        diff = xv[u] - xv[v]
        value = float(np.sum(diff * diff)) / n
        shape = x.shape

        def vjp(g):
            c = 2.0 * g[0, 0] / n
            out = np.zeros(shape)
            np.add.at(out, u, c * diff)
            np.add.at(out, v, -c * diff)
            return (out,)

        return self._push(np.array([[value]]), (x,), vjp, "trace_quadratic_de")

    # -- reverse pass -------------------------------------------------------

    def backward(self, loss):
        """Fill ``grad`` of every Param on this tape with multiplier * dloss/dparam."""
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads.pop(node.id, None)
            if g is None or node.vjp is None:
                if g is not None:
                    grads[node.id] = g  # leaf: keep for parameter readout
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg
        for p, node in self._params:
            g = grads.get(node.id)
            if g is None:
                p.grad = np.zeros_like(p.value)
            else:
                p.grad = np.asarray(g, dtype=np.float64).reshape(p.value.shape) * p.multiplier


class Adam:
    """Adam with L2 weight decay folded into the (already multiplier-scaled) gradient.

    The decay term is scaled by the parameter's multiplier as well, so a multiplier
    of zero freezes a parameter completely.
    """

    def __init__(self, params, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if self.weight_decay:
                g = g + (p.multiplier * self.weight_decay) * p.value
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            if self.lr == 0.0:
                continue
            p.value = p.value - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = np.zeros_like(p.value)


def sgd_adam_step(params, state, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """Functional form of one Adam step; ``state`` is an :class:`Adam` or None (creates one)."""
    if state is None:
        state = Adam(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
    else:
        state.lr, state.betas, state.eps, state.weight_decay = lr, betas, eps, weight_decay
    state.step()
    return state
