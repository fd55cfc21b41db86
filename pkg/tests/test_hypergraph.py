import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from hyperprop.data import Graph, MaskedFeatures, sbm_generate
from hyperprop.hypergraph import (PSEUDO_LABEL_EPS, DegenerateInputError, Hypergraph,
                                  build_feature_hypergraph, fuse, knn_indices,
                                  propagation_matrix, pseudo_label_values, spectral_radius)
from hyperprop.propagation import fp_reconstruct


def theta_oracle(h: Hypergraph):
    """Entry-by-entry evaluation of Dv^-1/2 H W De^-1 H^T Dv^-1/2 from the member lists."""
    n = h.n_nodes
    inc = h.incidence.toarray()
    d = np.array([sum(h.weights[e] * inc[v, e] for e in range(h.n_hyperedges)) for v in range(n)])
    delta = inc.sum(axis=0)
    theta = np.zeros((n, n))
    for e in range(h.n_hyperedges):
        members = np.flatnonzero(inc[:, e])
        for i in members:
            for j in members:
                theta[i, j] += h.weights[e] / delta[e] / np.sqrt(d[i] * d[j])
    return theta


def knn_oracle(x, k):
    out = []
    for i in range(len(x)):
        cands = sorted((float(np.sum((x[i] - x[j]) ** 2)), j) for j in range(len(x)) if j != i)
        out.append([j for _, j in cands[:k]])
    return np.array(out)


def random_hypergraph(rng, n, m, max_size=5, weights=False):
    members = [rng.choice(n, size=rng.integers(1, min(n, max_size) + 1), replace=False) for _ in range(m)]
    w = rng.uniform(0.2, 2.0, m) if weights else None
    return Hypergraph.from_members(n, members, w)


def test_knn_collinear():
    x = np.array([[0.0], [1.0], [10.0]])
    h = build_feature_hypergraph(x, mode="knn", k=1)
    assert [h.members(e).tolist() for e in range(3)] == [[0, 1], [0, 1], [1, 2]]
    assert knn_oracle(x, 1).tolist() == [[1], [0], [1]]


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_brute_force(seed):
    x = np.random.default_rng(seed).standard_normal((30, 4))
    assert np.array_equal(knn_indices(x, 5, chunk=7), knn_oracle(x, 5))


def test_knn_ties_go_to_lower_id():
    x = np.zeros((6, 2))
    assert knn_indices(x, 3).tolist()[4] == [0, 1, 2]
    assert knn_indices(x, 3).tolist()[0] == [1, 2, 3]


def test_knn_hypergraph_shape():
    x = np.random.default_rng(1).standard_normal((12, 3))
    h = build_feature_hypergraph(x, mode="knn", k=4)
    assert h.n_hyperedges == 12
    assert np.all(h.edge_degrees() == 5)
    assert np.all(h.weights == 1.0)
    for e in range(12):
        assert e in h.members(e)


def test_knn_degenerate():
    mf = MaskedFeatures.from_full(np.ones((4, 2)), np.zeros((4, 2), dtype=bool))
    with pytest.raises(DegenerateInputError):
        build_feature_hypergraph(mf, mode="knn", k=2)
    with pytest.raises(ValueError):
        build_feature_hypergraph(np.ones((4, 2)), mode="knn", k=4)


def test_hybrid_without_known_entries_is_topology(triangle):
    mf = MaskedFeatures.from_full(np.ones((3, 2)), np.zeros((3, 2), dtype=bool))
    h = build_feature_hypergraph(mf, triangle, mode="hybrid", k=1)
    topo = build_feature_hypergraph(mf, triangle, mode="topology")
    assert (h.incidence != topo.incidence).nnz == 0


def test_topology_triangle(triangle):
    h = build_feature_hypergraph(np.zeros((3, 1)), triangle, mode="topology")
    assert h.n_hyperedges == 3
    assert all(h.members(e).tolist() == [0, 1, 2] for e in range(3))


def test_pairwise_mode(triangle):
    h = build_feature_hypergraph(np.zeros((3, 1)), triangle, mode="pairwise")
    assert h.n_hyperedges == 3 and np.all(h.edge_degrees() == 2)


def test_hybrid_skips_empty_rows():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    x = np.array([[1.0], [0.0], [2.0], [3.0], [0.0]])
    h = build_feature_hypergraph(x, g, mode="hybrid", k=1)
    assert h.n_hyperedges == 5 + 3
    knn_edges = [h.members(e).tolist() for e in range(5, 8)]
    # node 2 sits at distance 1 from both 0 and 3; the tie goes to node 0
    assert knn_edges == [[0, 2], [0, 2], [2, 3]]


def test_empty_hyperedge_rejected():
    with pytest.raises(ValueError):
        Hypergraph.from_members(3, [[0, 1], []])


def test_degrees():
    h = Hypergraph.from_members(4, [[0, 1, 2], [2, 3]], weights=[2.0, 0.5])
    assert h.node_degrees().tolist() == [2.0, 2.0, 2.5, 0.5]
    assert h.edge_degrees().tolist() == [3, 2]
    h2 = Hypergraph.from_members(3, [[0, 1]])
    assert h2.isolated().tolist() == [False, False, True]


def test_theta_single_pair():
    theta = propagation_matrix(Hypergraph.from_members(2, [[0, 1]])).theta.toarray()
    assert theta.tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_theta_one_big_hyperedge():
    n = 7
    theta = propagation_matrix(Hypergraph.from_members(n, [range(n)])).theta.toarray()
    np.testing.assert_allclose(theta, np.full((n, n), 1 / n), atol=1e-15)


def test_theta_pairwise_equals_graph_operator():
    rng = np.random.default_rng(3)
    for _ in range(5):
        n = rng.integers(3, 11)
        pairs = [rng.choice(n, 2, replace=False) for _ in range(rng.integers(2, 15))]
        h = Hypergraph.from_members(n, pairs)
        hh = h.incidence.toarray()
        a_prime = hh @ hh.T
        d = hh.sum(axis=1)
        inv = np.where(d > 0, 1 / np.sqrt(np.where(d > 0, d, 1)), 0)
        expected = inv[:, None] * (0.5 * a_prime) * inv[None, :]
        np.testing.assert_allclose(propagation_matrix(h).theta.toarray(), expected, atol=1e-14)


@pytest.mark.parametrize("seed", range(8))
def test_theta_matches_formula(seed):
    rng = np.random.default_rng(seed)
    h = random_hypergraph(rng, 10, 6, weights=True)
    np.testing.assert_allclose(propagation_matrix(h).theta.toarray(), theta_oracle(h), atol=1e-14)


def test_theta_isolated_rows_zero():
    theta = propagation_matrix(Hypergraph.from_members(4, [[0, 1], [1, 2]])).theta.toarray()
    assert np.all(theta[3] == 0) and np.all(theta[:, 3] == 0)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        propagation_matrix(Hypergraph.from_members(2, [[0, 1]], weights=[-1.0]))


def test_row_sums_on_regular_hypergraph():
    # every node lies in the same number of unit-weight hyperedges
    h = Hypergraph.from_members(6, [[0, 1, 2], [3, 4, 5], [0, 3], [1, 4], [2, 5]])
    theta = propagation_matrix(h).theta
    np.testing.assert_allclose(np.asarray(theta.sum(axis=1)).ravel(), 1.0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(1, 30), st.booleans(), st.integers(0, 2**32 - 1))
def test_laplacian_psd(n, m, weighted, seed):
    rng = np.random.default_rng(seed)
    pm = propagation_matrix(random_hypergraph(rng, n, m, weights=weighted))
    t = pm.theta
    assert abs(t - t.T).max() <= 1e-12 if t.nnz else True
    lap = pm.laplacian().toarray()
    x = rng.standard_normal((n, 100))
    x /= np.linalg.norm(x, axis=0)
    assert np.min(np.einsum("ij,ij->j", x, lap @ x)) >= -1e-9
    assert spectral_radius(t) <= 1 + 1e-9


# ----------------------------------------------------------------------------
# pseudo-label values and fusion

def test_pseudo_values_examples():
    pattern = propagation_matrix(Hypergraph.from_members(3, [[0, 1, 2]])).theta
    same = pseudo_label_values(np.eye(3)[[0, 0, 0]], pattern)
    assert np.all(same.data == 1.0)
    diff = pseudo_label_values(np.eye(3)[[0, 1, 2]], pattern).toarray()
    assert np.all(diff[~np.eye(3, dtype=bool)] == PSEUDO_LABEL_EPS)
    uniform = pseudo_label_values(np.full((3, 4), 0.25), pattern)
    np.testing.assert_allclose(uniform.data, 0.25, atol=1e-16)
    hard = pseudo_label_values(np.array([[0.6, 0.4], [0.7, 0.3], [0.2, 0.8]]), pattern,
                               mode="hard-indicator").toarray()
    assert hard[0, 1] == 1.0 and hard[0, 2] == PSEUDO_LABEL_EPS


def test_pseudo_values_monotone_in_agreement():
    pattern = propagation_matrix(Hypergraph.from_members(2, [[0, 1]])).theta
    anchor = np.array([0.8, 0.2])
    prev = -1.0
    # unit-norm probability rows of increasing alignment with the anchor
    for t in np.linspace(0.0, 1.0, 11):
        other = (1 - t) * np.array([0.2, 0.8]) + t * anchor
        other /= np.linalg.norm(other)
        row = anchor / np.linalg.norm(anchor)
        v = pseudo_label_values(np.vstack([row, other]), pattern).toarray()[0, 1]
        assert v >= prev
        prev = v


def test_fuse_all_ones_is_identity():
    rng = np.random.default_rng(0)
    pm = propagation_matrix(random_hypergraph(rng, 15, 10))
    ones = pseudo_label_values(np.eye(2)[np.zeros(15, dtype=int)], pm.theta)
    fused = fuse(pm, ones)
    assert fused.source == "fused"
    np.testing.assert_allclose(fused.theta.toarray(), pm.theta.toarray(), rtol=0, atol=1e-12)


def test_fuse_pattern_mismatch():
    pm = propagation_matrix(Hypergraph.from_members(3, [[0, 1, 2]]))
    other = propagation_matrix(Hypergraph.from_members(3, [[0, 1]])).theta
    with pytest.raises(ValueError):
        fuse(pm, other)


def test_fuse_uniform_keeps_fixed_point():
    rng = np.random.default_rng(4)
    for _ in range(5):
        g = random_graph(rng, 18, 0.3)
        x = rng.standard_normal((18, 3))
        h = build_feature_hypergraph(x, g, mode="hybrid", k=3)
        pm = propagation_matrix(h)
        fused = fuse(pm, pseudo_label_values(np.full((18, 4), 0.25), pm.theta))
        mf = MaskedFeatures.from_full(x, rng.random((18, 3)) < 0.5)
        a = fp_reconstruct(pm, mf, 4000).features
        b = fp_reconstruct(fused, mf, 4000).features
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_fuse_suppresses_cross_class_entries():
    b = sbm_generate([8, 8], 1.0, 0.0, 2, 1.0, seed=0)
    g = Graph.from_edges(16, np.vstack([b.graph.edges, [[0, 8], [3, 12]]]))
    pm = propagation_matrix(build_feature_hypergraph(b.features, g, mode="pairwise"))
    fused = fuse(pm, pseudo_label_values(np.eye(2)[b.labels], pm.theta)).theta.toarray()
    before = pm.theta.toarray()
    intra = fused[0, 1]
    assert fused[0, 8] / intra < 1e-5
    assert fused[3, 12] / fused[3, 4] < 1e-5
    assert before[0, 8] / before[0, 1] > 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 25), st.integers(0, 2**32 - 1))
def test_fused_operator_invariants(n, seed):
    rng = np.random.default_rng(seed)
    pm = propagation_matrix(random_hypergraph(rng, n, n, weights=True))
    probs = rng.dirichlet(np.ones(3), size=n)
    fused = fuse(pm, pseudo_label_values(probs, pm.theta)).theta
    dense = fused.toarray()
    np.testing.assert_allclose(dense, dense.T, atol=1e-12)
    assert np.all((dense != 0) <= (pm.theta.toarray() != 0))
    x = rng.standard_normal((n, 100))
    x /= np.linalg.norm(x, axis=0)
    assert np.min(np.einsum("ij,ij->j", x, x - dense @ x)) >= -1e-9
    assert spectral_radius(fused) <= 1 + 1e-9
