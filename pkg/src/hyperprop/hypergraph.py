"""Feature hypergraphs, pseudo-label weighting, fusion and the propagation operator."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from hyperprop.data import MaskedFeatures
from hyperprop.sparse import (canonicalize, from_triplets, same_pattern, scale_cols,
                              scale_rows, spgemm, spmm, transpose)

HYPERGRAPH_MODES = ("knn", "topology", "pairwise", "hybrid")
PSEUDO_LABEL_EPS = 1e-6


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Incidence matrix H (nodes x hyperedges, 0/1) with hyperedge weights W."""

    incidence: sp.csr_array
    weights: np.ndarray

    def __post_init__(self):
        if len(self.weights) != self.incidence.shape[1]:
            raise ValueError(f"{len(self.weights)} weights for {self.incidence.shape[1]} hyperedges")
        if np.any(self.edge_degrees() < 1):
            raise ValueError("empty hyperedge")

    @classmethod
    def from_members(cls, n_nodes, members, weights=None):
        """Build from a list of node-index collections, one per hyperedge."""
        cols = np.repeat(np.arange(len(members)), [len(m) for m in members])
        rows = np.concatenate([np.asarray(m, dtype=np.int64) for m in members]) if members else []
        h = from_triplets(rows, cols, np.ones(len(cols)), (n_nodes, len(members)))
        # repeated members within one hyperedge collapse to a single incidence
        h.data[:] = 1.0
        w = np.ones(len(members)) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls(h, w)

    @property
    def n_nodes(self):
        return self.incidence.shape[0]

    @property
    def n_hyperedges(self):
        return self.incidence.shape[1]

    def node_degrees(self):
        """d(v) = sum over hyperedges of w(e) h(v, e)."""
        return spmm(self.incidence, self.weights)

    def edge_degrees(self):
        """delta(e) = number of nodes in e."""
        return np.asarray(self.incidence.sum(axis=0)).ravel()

    def isolated(self):
        return self.node_degrees() == 0

    def members(self, e):
        col = self.incidence[:, [e]].tocoo()
        return np.sort(col.row)

    def concat(self, other):
        h = canonicalize(sp.hstack([self.incidence, other.incidence], format="csr"))
        return Hypergraph(h, np.concatenate([self.weights, other.weights]))


@dataclass(frozen=True, eq=False)
class PropagationMatrix:
    """Normalized operator theta; ``degrees`` are the node degrees it was built from."""

    theta: sp.csr_array
    source: str
    degrees: np.ndarray

    @property
    def n(self):
        return self.theta.shape[0]

    def laplacian(self):
        return canonicalize(sp.identity(self.n, format="csr") - self.theta)


def knn_indices(x, k, candidates=None, chunk=256):
    """Exact k nearest neighbours by Euclidean distance, excluding the query itself.

    Rows come back ordered by (distance, node id), so ties go to the lower id.
    Only nodes flagged in ``candidates`` may be returned as neighbours.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    allowed = np.ones(n, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    if not 1 <= k < allowed.sum():
        raise ValueError(f"k={k} needs 1 <= k < number of candidate nodes ({allowed.sum()})")
    sq = np.einsum("ij,ij->i", x, x)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dist = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(dist, 0.0, out=dist)
        dist[:, ~allowed] = np.inf
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        for r in range(stop - start):
            row = dist[r]
            kth = np.partition(row, k - 1)[k - 1]
            below = np.flatnonzero(row < kth)
            tied = np.flatnonzero(row == kth)[:k - len(below)]
            sel = np.concatenate([below, tied])
            out[start + r] = sel[np.lexsort((sel, row[sel]))]
    return out


def build_feature_hypergraph(features, graph=None, mode="knn", k=10, known=None):
    """One hyperedge per centroid node, containing the centroid and its neighbours.

    ``knn``: the k nearest nodes in feature space (unknown entries count as 0).
    ``topology``: the centroid's graph neighbours.
    ``pairwise``: one two-node hyperedge per graph edge, i.e. the plain graph.
    ``hybrid``: topology hyperedges followed by kNN hyperedges; nodes whose
    feature row is entirely zero get no kNN hyperedge and are never chosen as
    kNN neighbours, since their distances carry no information.
    """
    if isinstance(features, MaskedFeatures):
        known = features.known if known is None else known
        features = features.features
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("a feature hypergraph needs at least two nodes")
    if mode not in HYPERGRAPH_MODES:
        raise ValueError(f"unknown hypergraph mode {mode!r}")

    if mode in ("topology", "pairwise", "hybrid") and graph is None:
        raise ValueError(f"mode {mode!r} needs the graph")
    if mode == "pairwise":
        return Hypergraph.from_members(n, list(graph.edges))
    if mode in ("topology", "hybrid"):
        adj = graph.adjacency
        topo = Hypergraph.from_members(
            n, [np.append(adj.indices[adj.indptr[i]:adj.indptr[i + 1]], i) for i in range(n)])
        if mode == "topology":
            return topo

    if mode == "knn":
        if known is not None and not np.any(known):
            raise DegenerateInputError("every feature entry is unknown; kNN distances are undefined")
        nbrs = knn_indices(x, k)
        return Hypergraph.from_members(n, [np.append(nbrs[i], i) for i in range(n)])

    informative = np.any(x != 0.0, axis=1)
    if informative.sum() <= k:
        return topo
    nbrs = knn_indices(x, k, candidates=informative)
    centroids = np.flatnonzero(informative)
    return topo.concat(Hypergraph.from_members(n, [np.append(nbrs[i], i) for i in centroids]))


def propagation_matrix(h: Hypergraph) -> PropagationMatrix:
    """theta = Dv^-1/2 H W De^-1 H^T Dv^-1/2, with 0^-1/2 taken as 0."""
    if np.any(h.weights < 0):
        raise ValueError("hyperedge weights must be non-negative")
    dv = h.node_degrees()
    de = h.edge_degrees()
    inv_sqrt = np.zeros_like(dv)
    np.divide(1.0, np.sqrt(dv), out=inv_sqrt, where=dv > 0)
    hwd = scale_cols(h.incidence, h.weights / de)
    theta = spgemm(hwd, transpose(h.incidence))
    theta = scale_cols(scale_rows(theta, inv_sqrt), inv_sqrt)
    return PropagationMatrix(theta, "feature", dv)


def pseudo_label_values(probs, pattern, mode="soft-dot", eps=PSEUDO_LABEL_EPS):
    """Agreement weight for every stored position (i, j) of ``pattern``.

    ``soft-dot``: probs[i] . probs[j]; ``hard-indicator``: 1 if the argmax
    classes match. Both are clamped below at ``eps``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    rows = np.repeat(np.arange(pattern.shape[0]), np.diff(pattern.indptr))
    cols = pattern.indices
    if mode == "soft-dot":
        vals = np.einsum("ij,ij->i", probs[rows], probs[cols])
    elif mode == "hard-indicator":
        cls = np.argmax(probs, axis=1)
        vals = (cls[rows] == cls[cols]).astype(np.float64)
    else:
        raise ValueError(f"unknown pseudo-label mode {mode!r}")
    vals = np.maximum(vals, eps)
    return sp.csr_array((vals, pattern.indices.copy(), pattern.indptr.copy()),
                        shape=pattern.shape)


def fuse(theta_f: PropagationMatrix, values) -> PropagationMatrix:
    """Reweight theta_f entry-wise by ``values`` and renormalize.

    The product M = theta_f * S is symmetrized and then rescaled as
    diag(s) M diag(s) with s = sqrt(d / d'), d' = sqrt(d) * (M sqrt(d)).
    This is the symmetric normalization of the reweighted pairwise hypergraph
    weights, so the spectrum stays in [-1, 1] and a constant reweighting
    gives back theta_f.
    """
    t = theta_f.theta
    if not same_pattern(t, values):
        raise ValueError("pseudo-label values must share the sparsity pattern of theta_f")
    m = sp.csr_array((t.data * values.data, t.indices.copy(), t.indptr.copy()), shape=t.shape)
    m = canonicalize(0.5 * (m + transpose(m)))
    u = np.sqrt(theta_f.degrees)
    new_deg = u * spmm(m, u)
    scale = np.zeros_like(new_deg)
    np.divide(u, np.sqrt(new_deg), out=scale, where=new_deg > 0)
    fused = scale_cols(scale_rows(m, scale), scale)
    return PropagationMatrix(fused, "fused", theta_f.degrees)


def spectral_radius(theta, iters=500, seed=0):
    """Power-iteration estimate of the largest eigenvalue magnitude."""
    n = theta.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    lam = 0.0
    for _ in range(iters):
        w = spmm(theta, v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam, v = norm / np.linalg.norm(v), w / norm
    return lam
