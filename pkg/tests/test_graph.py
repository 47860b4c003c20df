import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from tined.errors import DataError, DomainError, ShapeError
from tined.graph import (
    Graph,
    LaplacianKind,
    SplitSpec,
    closed_mean_aggregator,
    dirichlet_energy,
    dirichlet_energy_sampled,
    edge_spanned_subgraph,
    edge_sum,
    full_edge_set,
    induced_subgraph,
    laplacian,
    make_production_split,
    make_transductive_split,
    mean_aggregator,
    observed_subgraph,
    sample_edges,
)


def trace_energy(h, g):
    """Independent oracle: (1/n) tr(H^T L H) with a dense Laplacian built from scratch."""
    a = np.zeros((g.n, g.n))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1.0
    lap = np.diag(a.sum(1)) - a
    return np.trace(h.T @ lap @ h) / g.n


def test_from_edges_symmetrizes_and_dedups():
    g = Graph.from_edges(3, [(0, 1), (1, 0), (1, 2), (2, 2)])
    assert g.m == 2
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.degrees.tolist() == [1, 2, 1]


def test_from_edges_out_of_range():
    with pytest.raises(DataError):
        Graph.from_edges(2, [(0, 5)])


def test_path_laplacian(path3):
    np.testing.assert_array_equal(laplacian(path3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_normalized_operator_rows(path3):
    p = laplacian(path3, LaplacianKind.NORMALIZED_SELF_LOOPS)
    d = np.array([2.0, 3.0, 2.0])
    ref = (np.eye(3) + path3.adjacency()) / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(p, ref)


def test_mean_aggregator_isolated_row_is_zero():
    g = Graph.from_edges(3, [(0, 1)])
    m = mean_aggregator(g).toarray()
    np.testing.assert_array_equal(m[2], 0.0)
    np.testing.assert_array_equal(m[0], [0, 1, 0])


def test_closed_mean_rows_sum_to_one(rng):
    g = random_graph(12, 0.3, rng)
    np.testing.assert_allclose(closed_mean_aggregator(g).toarray().sum(1), 1.0)


def test_energy_of_path_example(path3):
    h = np.array([[0.0], [1.0], [3.0]])
    assert dirichlet_energy(h, path3) == pytest.approx((1 + 4) / 3)


def test_energy_shape_error(path3):
    with pytest.raises(ShapeError):
        dirichlet_energy(np.ones((4, 2)), path3)


def test_trace_vs_edge_sum_random_pairs():
    r = np.random.default_rng(7)
    for _ in range(100):
        n = int(r.integers(2, 25))
        g = random_graph(n, float(r.uniform(0.05, 0.9)), r)
        h = r.normal(size=(n, int(r.integers(1, 6))))
        e_edge = dirichlet_energy(h, g)
        e_trace = trace_energy(h, g)
        assert abs(e_edge - e_trace) <= 1e-10 * max(abs(e_trace), 1e-300)


def test_constant_embedding_has_zero_energy(rng):
    g = random_graph(15, 0.4, rng)
    h = np.tile(rng.normal(size=(1, 4)), (15, 1))
    assert dirichlet_energy(h, g) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(-50, 50, allow_nan=False).filter(lambda c: abs(c) > 1e-3))
def test_energy_is_quadratic(seed, c):
    r = np.random.default_rng(seed)
    g = random_graph(10, 0.4, r)
    h = r.normal(size=(10, 3))
    e = dirichlet_energy(h, g)
    assert dirichlet_energy(c * h, g) == pytest.approx(c * c * e, rel=1e-12, abs=1e-300)


def test_sample_edges_domain(path3):
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            sample_edges(path3, bad, 0)


def test_sample_edges_size_and_determinism(rng):
    g = random_graph(40, 0.3, rng)
    a = sample_edges(g, 0.25, seed=3)
    b = sample_edges(g, 0.25, seed=3)
    assert len(a.u) == int(np.ceil(0.25 * g.m))
    np.testing.assert_array_equal(a.u, b.u)
    assert a.n_norm == len(np.unique(np.concatenate([a.u, a.v])))


def test_zeta_one_matches_edge_spanned_subgraph_exactly(rng):
    # isolated nodes make the two normalizers differ from n, exercising the subgraph path
    g = Graph.from_edges(12, [(0, 1), (1, 2), (2, 5), (5, 9), (3, 9), (1, 9)])
    h = rng.normal(size=(12, 4))
    sub, nodes = edge_spanned_subgraph(g)
    es = sample_edges(g, 1.0, seed=0)
    assert edge_sum(h, es) == edge_sum(h[nodes], full_edge_set(sub))
    assert dirichlet_energy_sampled(h, g, 1.0, seed=0) == dirichlet_energy(h[nodes], sub)


def test_induced_subgraph_relabels():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    sub = induced_subgraph(g, np.array([1, 2, 4]))
    assert sub.n == 3
    assert sub.edges.tolist() == [[0, 1]]


def _labels(n, k):
    return np.arange(n) % k


def test_transductive_split_partitions():
    labels = _labels(60, 3)
    s = make_transductive_split(60, 5, 4, labels, seed=1)
    s.validate(60)
    assert len(s.labeled) == 15 and len(s.validation) == 12 and len(s.unlabeled) == 33
    for c in range(3):
        assert np.sum(labels[s.labeled] == c) == 5


def test_transductive_split_too_few_members():
    with pytest.raises(DataError):
        make_transductive_split(10, 4, 4, _labels(10, 2), seed=0)


def test_production_split_holds_out_twenty_percent():
    s = make_production_split(make_transductive_split(60, 5, 4, _labels(60, 3), seed=1), seed=2)
    s.validate(60)
    assert len(s.inductive) == 6  # floor(0.2 * 33)
    assert set(s.inductive).isdisjoint(s.observed_nodes())


def test_production_split_minimum_one():
    base = SplitSpec(np.array([0]), np.array([2]), np.array([1]))
    assert len(make_production_split(base, 0).inductive) == 1


def test_split_dict_roundtrip():
    s = make_production_split(make_transductive_split(40, 3, 3, _labels(40, 2), seed=4), seed=4)
    t = SplitSpec.from_dict(s.to_dict())
    for k in ("labeled", "unlabeled", "validation", "observed", "inductive"):
        np.testing.assert_array_equal(getattr(s, k), getattr(t, k))


def test_split_validate_overlap():
    with pytest.raises(DataError):
        SplitSpec(np.array([0, 1]), np.array([1, 2]), np.array([3])).validate(4)


def test_observed_subgraph_drops_inductive_edges():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    s = SplitSpec(np.array([0]), np.array([2, 3]), np.array([1]), observed=np.array([3]), inductive=np.array([2]))
    assert observed_subgraph(g, s).edges.tolist() == [[0, 1]]
