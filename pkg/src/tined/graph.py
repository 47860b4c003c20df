"""Undirected graphs, Laplacians, Dirichlet energy and the node split protocols."""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, DomainError, ShapeError

PRODUCTION_HOLDOUT = 0.2


class LaplacianKind(enum.Enum):
    COMBINATORIAL = "combinatorial"  # L = D - A
    NORMALIZED_SELF_LOOPS = "normalized"  # D^-1/2 (A + I) D^-1/2


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph. ``edges`` is an (m, 2) int array with u < v, sorted, unique."""

    n: int
    edges: np.ndarray
    csr: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, pairs):
        """Build from arbitrary (possibly directed, duplicated) pairs; self-loops are dropped."""
        n = int(n)
        if n < 1:
            raise DataError("graph needs at least one node")
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise DataError(f"edge endpoint out of range for n={n}")
        arr = arr[arr[:, 0] != arr[:, 1]]
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(arr) else np.zeros((0, 2), np.int64)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        csr = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        csr.sort_indices()
        degrees = np.diff(csr.indptr).astype(np.int64)
        return cls(n=n, edges=edges, csr=csr, degrees=degrees)

    @property
    def m(self):
        return len(self.edges)

    def neighbors(self, v):
        return self.csr.indices[self.csr.indptr[v]:self.csr.indptr[v + 1]]

    def adjacency(self):
        return self.csr.toarray()


def laplacian(g, kind=LaplacianKind.COMBINATORIAL):
    """Dense Laplacian of ``g``; see :class:`LaplacianKind`."""
    return propagation_matrix(g, kind).toarray()


def propagation_matrix(g, kind):
    """Sparse CSR version of :func:`laplacian`, used as a propagation operator."""
    if kind is LaplacianKind.COMBINATORIAL:
        out = sp.diags(g.degrees.astype(np.float64)) - g.csr
    elif kind is LaplacianKind.NORMALIZED_SELF_LOOPS:
        a_hat = g.csr + sp.identity(g.n, format="csr")
        d_inv_sqrt = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
        out = sp.diags(d_inv_sqrt) @ a_hat @ sp.diags(d_inv_sqrt)
    else:
        raise ValueError(f"unknown Laplacian kind {kind!r}")
    out = sp.csr_matrix(out)
    out.sort_indices()
    return out


def mean_aggregator(g):
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    deg = g.degrees.astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    out = sp.csr_matrix(sp.diags(inv) @ g.csr)
    out.sort_indices()
    return out


def closed_mean_aggregator(g):
    """Mean over each node's neighbors and itself, (D + I)^-1 (A + I)."""
    a_hat = g.csr + sp.identity(g.n, format="csr")
    out = sp.csr_matrix(sp.diags(1.0 / (g.degrees + 1.0)) @ a_hat)
    out.sort_indices()
    return out


@dataclass(frozen=True)
class EdgeSet:
    """Edges over which Dirichlet energy is summed, and the node count that normalizes it."""

    u: np.ndarray
    v: np.ndarray
    n_norm: int


def full_edge_set(g):
    return EdgeSet(u=g.edges[:, 0], v=g.edges[:, 1], n_norm=g.n)


def sample_edges(g, zeta, seed):
    """Uniformly sample ceil(zeta * m) edges without replacement.

    The result is normalized by the number of distinct endpoints, i.e. it is the
    edge set of the subgraph induced by the sampled edges. Sampled edges keep their
    original order so that ``zeta = 1`` reproduces the full edge list exactly.
    """
    if not (0.0 < zeta <= 1.0):
        raise DomainError(f"zeta must lie in (0, 1], got {zeta}")
    m = g.m
    k = math.ceil(zeta * m)
    if k >= m:
        idx = np.arange(m)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(m, size=k, replace=False))
    e = g.edges[idx]
    n_sub = len(np.unique(e)) if len(e) else 0
    return EdgeSet(u=e[:, 0], v=e[:, 1], n_norm=max(n_sub, 1))


def edge_sum(h, edge_set):
    """Sum over the edge set of squared row differences."""
    diff = h[edge_set.u] - h[edge_set.v]
    return float(np.sum(diff * diff))


def dirichlet_energy(h, g):
    """(1/n) tr(H^T (D - A) H), evaluated as a sum over undirected edges."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h.reshape(-1, 1)
    if h.shape[0] != g.n:
        raise ShapeError(f"embedding has {h.shape[0]} rows but graph has {g.n} nodes")
    return edge_sum(h, full_edge_set(g)) / g.n


def dirichlet_energy_sampled(h, g, zeta, seed):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h.reshape(-1, 1)
    if h.shape[0] != g.n:
        raise ShapeError(f"embedding has {h.shape[0]} rows but graph has {g.n} nodes")
    es = sample_edges(g, zeta, seed)
    return edge_sum(h, es) / es.n_norm


def edge_spanned_subgraph(g):
    """Subgraph on the non-isolated nodes of ``g`` (relabeled), plus the kept node ids."""
    nodes = np.unique(g.edges) if g.m else np.zeros(0, np.int64)
    return induced_subgraph(g, nodes), nodes


def induced_subgraph(g, nodes):
    """Subgraph induced by ``nodes`` with nodes relabeled 0..len(nodes)-1 in the given order."""
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    keep = (remap[g.edges[:, 0]] >= 0) & (remap[g.edges[:, 1]] >= 0)
    e = remap[g.edges[keep]]
    return Graph.from_edges(max(len(nodes), 1), e)


@dataclass(frozen=True, eq=False)
class SplitSpec:
    labeled: np.ndarray
    unlabeled: np.ndarray
    validation: np.ndarray
    observed: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    inductive: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def production(self):
        return len(self.inductive) > 0

    def observed_nodes(self):
        """Every node except the inductive hold-out, sorted."""
        return np.sort(np.concatenate([self.labeled, self.validation, self.observed if self.production else self.unlabeled]))

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("labeled", "unlabeled", "validation", "observed", "inductive")}

    @classmethod
    def from_dict(cls, d):
        def arr(key):
            return np.sort(np.asarray(d.get(key, []), dtype=np.int64))

        return cls(arr("labeled"), arr("unlabeled"), arr("validation"), arr("observed"), arr("inductive"))

    def validate(self, n):
        parts = [self.labeled, self.unlabeled, self.validation]
        allids = np.concatenate(parts)
        if len(allids) and (allids.min() < 0 or allids.max() >= n):
            raise DataError(f"split contains node ids outside [0, {n})")
        if len(np.unique(allids)) != len(allids):
            raise DataError("labeled, unlabeled and validation sets overlap")
        if len(allids) != n:
            raise DataError(f"split covers {len(allids)} nodes, graph has {n}")
        if len(self.observed) or len(self.inductive):
            both = np.concatenate([self.observed, self.inductive])
            if len(np.unique(both)) != len(both) or not np.array_equal(np.sort(both), np.sort(self.unlabeled)):
                raise DataError("observed and inductive sets must partition the unlabeled set")


def make_transductive_split(n, labels_per_class, val_per_class, labels, seed):
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != n:
        raise DataError(f"{len(labels)} labels for {n} nodes")
    rng = np.random.default_rng(seed)
    labeled, validation = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        need = labels_per_class + val_per_class
        if len(members) < need:
            raise DataError(f"class {c} has {len(members)} nodes, need {need}")
        perm = rng.permutation(members)
        labeled.append(perm[:labels_per_class])
        validation.append(perm[labels_per_class:need])
    labeled = np.sort(np.concatenate(labeled))
    validation = np.sort(np.concatenate(validation))
    taken = np.zeros(n, dtype=bool)
    taken[labeled] = True
    taken[validation] = True
    return SplitSpec(labeled=labeled, unlabeled=np.flatnonzero(~taken), validation=validation)


def make_production_split(base, seed):
    """Hold out 20% (floor, at least one) of the unlabeled nodes as the inductive set."""
    if base.production or len(base.observed):
        raise DataError("base split is already a production split")
    u = base.unlabeled
    if len(u) == 0:
        raise DataError("no unlabeled nodes to hold out")
    k = max(1, math.floor(PRODUCTION_HOLDOUT * len(u)))
    ind = np.sort(np.random.default_rng(seed).choice(u, size=k, replace=False))
    obs = np.setdiff1d(u, ind)
    return SplitSpec(base.labeled, u, base.validation, observed=obs, inductive=ind)


def observed_subgraph(g, split):
    """Same node indexing, with every edge touching an inductive node removed."""
    if len(split.inductive) == 0:
        return g
    held = np.zeros(g.n, dtype=bool)
    held[split.inductive] = True
    keep = ~(held[g.edges[:, 0]] | held[g.edges[:, 1]])
    return Graph.from_edges(g.n, g.edges[keep])
