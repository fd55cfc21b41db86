"""Graph data model, dataset bundles, masks, splits and synthetic graphs.

A dataset bundle is a directory holding::

    graph.tsv      one undirected edge per line, ``src<TAB>dst`` (0-based)
    features.csv   n rows of d comma-separated reals
                   (or features.f32 raw little-endian row-major float32
                   plus shape.json ``{"n": .., "d": ..}``)
    labels.csv     one integer class id per line
    meta.json      {"name", "n_nodes", "n_features", "n_classes"}
"""

import json
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from hyperprop.sparse import as_dense, from_triplets

MASK_MODES = ("uniform-entry", "whole-node")


class BundleError(ValueError):
    """A dataset bundle is missing a file or is internally inconsistent."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph; ``edges`` holds each pair once with u < v."""

    n_nodes: int
    edges: np.ndarray
    adjacency: sp.csr_array

    @classmethod
    def from_edges(cls, n_nodes, edges):
        """Build a simple graph, dropping self-loops and duplicate edges."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n_nodes):
            raise ValueError(f"edge endpoint out of range for {n_nodes} nodes")
        e = e[e[:, 0] != e[:, 1]]
        e = np.unique(np.sort(e, axis=1), axis=0)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = from_triplets(rows, cols, np.ones(len(rows)), (n_nodes, n_nodes))
        return cls(int(n_nodes), e, adj)

    @property
    def n_edges(self):
        return len(self.edges)

    def degrees(self):
        return np.diff(self.adjacency.indptr)

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes`` (sorted), relabelled 0..len-1."""
        nodes = np.asarray(nodes, dtype=np.int64)
        relabel = np.full(self.n_nodes, -1, dtype=np.int64)
        relabel[nodes] = np.arange(len(nodes))
        keep = (relabel[self.edges[:, 0]] >= 0) & (relabel[self.edges[:, 1]] >= 0)
        return Graph.from_edges(len(nodes), relabel[self.edges[keep]])


@dataclass(frozen=True, eq=False)
class MaskedFeatures:
    """Feature matrix with a known-entry mask; unknown entries are held at 0."""

    features: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        if self.features.shape != self.known.shape:
            raise ValueError(f"features {self.features.shape} and mask {self.known.shape} differ")

    @classmethod
    def from_full(cls, x, known):
        x = as_dense(x)
        known = np.asarray(known, dtype=bool)
        if known.ndim == 1:
            known = np.broadcast_to(known[:, None], x.shape)
        known = np.ascontiguousarray(known)
        return cls(np.where(known, x, 0.0), known)

    @property
    def shape(self):
        return self.features.shape


@dataclass(frozen=True, eq=False)
class LabeledSplits:
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    name: str
    graph: Graph
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        n = self.graph.n_nodes
        if self.features.shape[0] != n or len(self.labels) != n:
            raise ValueError(
                f"inconsistent bundle: graph has {n} nodes, features "
                f"{self.features.shape[0]} rows, labels {len(self.labels)}")

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1

    @property
    def n_features(self):
        return self.features.shape[1]

    def largest_component(self):
        n_comp, comp = connected_components(self.graph.adjacency, directed=False)
        if n_comp == 1:
            return self
        sizes = np.bincount(comp)
        nodes = np.flatnonzero(comp == np.argmax(sizes))
        labels = self.labels[nodes]
        _, labels = np.unique(labels, return_inverse=True)
        return DatasetBundle(self.name, self.graph.subgraph(nodes),
                             self.features[nodes], labels.astype(np.int64))


# ----------------------------------------------------------------------------
# bundle IO

def read_features(path):
    """Read ``features.csv`` or ``features.f32`` (with ``shape.json`` beside it)."""
    path = Path(path)
    if not path.exists():
        raise BundleError(f"{path}: file not found")
    if path.suffix == ".f32":
        shape_file = path.with_name("shape.json")
        if not shape_file.exists():
            raise BundleError(f"{shape_file}: file not found")
        shape = json.loads(shape_file.read_text())
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != shape["n"] * shape["d"]:
            raise BundleError(f"{path}: {raw.size} values, shape.json says {shape['n']}x{shape['d']}")
        return raw.reshape(shape["n"], shape["d"]).astype(np.float64)
    try:
        x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as err:
        raise BundleError(f"{path}: {err}") from err
    return x


def write_features(path, x, fmt=None):
    """Write features as CSV (round-trip exact) or raw float32."""
    path = Path(path)
    x = np.asarray(x, dtype=np.float64)
    fmt = fmt or ("f32" if path.suffix == ".f32" else "csv")
    if fmt == "f32":
        x.astype("<f4").tofile(path)
        path.with_name("shape.json").write_text(json.dumps({"n": x.shape[0], "d": x.shape[1]}))
    else:
        np.savetxt(path, x, delimiter=",", fmt="%.17g")
    return path


def load_bundle(directory, largest_component=False):
    directory = Path(directory)
    if not directory.is_dir():
        raise BundleError(f"{directory}: bundle directory not found")
    meta_file = directory / "meta.json"
    if not meta_file.exists():
        raise BundleError(f"{meta_file}: file not found")
    meta = json.loads(meta_file.read_text())

    feat_file = directory / "features.csv"
    if not feat_file.exists():
        feat_file = directory / "features.f32"
    x = read_features(feat_file)
    n = int(meta.get("n_nodes", x.shape[0]))
    if x.shape[0] != n:
        raise BundleError(f"{feat_file}: {x.shape[0]} rows but meta.json says n_nodes={n}")
    if "n_features" in meta and x.shape[1] != meta["n_features"]:
        raise BundleError(f"{feat_file}: {x.shape[1]} columns but meta.json says "
                          f"n_features={meta['n_features']}")

    label_file = directory / "labels.csv"
    if not label_file.exists():
        raise BundleError(f"{label_file}: file not found")
    labels = np.loadtxt(label_file, dtype=np.int64, ndmin=1)
    if len(labels) != n:
        raise BundleError(f"{label_file}: {len(labels)} labels for {n} nodes")
    classes = np.unique(labels)
    if not np.array_equal(classes, np.arange(len(classes))):
        raise BundleError(f"{label_file}: class ids must be contiguous 0..C-1")
    if "n_classes" in meta and len(classes) != meta["n_classes"]:
        raise BundleError(f"{label_file}: {len(classes)} classes but meta.json says "
                          f"n_classes={meta['n_classes']}")

    graph_file = directory / "graph.tsv"
    if not graph_file.exists():
        raise BundleError(f"{graph_file}: file not found")
    edges = np.loadtxt(graph_file, dtype=np.int64, delimiter="\t", ndmin=2).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise BundleError(f"{graph_file}: node id out of range for {n} nodes")

    bundle = DatasetBundle(meta.get("name", directory.name),
                           Graph.from_edges(n, edges), x, labels)
    return bundle.largest_component() if largest_component else bundle


def save_bundle(bundle, directory, fmt="csv"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "graph.tsv", bundle.graph.edges, fmt="%d", delimiter="\t")
    write_features(directory / ("features.f32" if fmt == "f32" else "features.csv"),
                   bundle.features, fmt)
    np.savetxt(directory / "labels.csv", bundle.labels, fmt="%d")
    meta = {"name": bundle.name, "n_nodes": bundle.graph.n_nodes,
            "n_features": bundle.n_features, "n_classes": bundle.n_classes}
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))
    return directory


def _load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def convert_planetoid(raw_dir, name, out_dir, fmt="csv"):
    """Convert the public Planetoid ``ind.<name>.*`` files into a bundle.

    Follows the usual loading recipe: training and test blocks are stacked,
    test rows are put back in index order, and test indices missing from the
    release (Citeseer) get zero features and a zero label row.
    """
    raw_dir = Path(raw_dir)
    parts = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        f = raw_dir / f"ind.{name}.{key}"
        if not f.exists():
            raise BundleError(f"{f}: file not found")
        parts[key] = _load_pickle(f)
    index_file = raw_dir / f"ind.{name}.test.index"
    if not index_file.exists():
        raise BundleError(f"{index_file}: file not found")
    test_idx = np.loadtxt(index_file, dtype=np.int64, ndmin=1)
    test_sorted = np.sort(test_idx)

    tx, ty = parts["tx"], np.asarray(parts["ty"])
    full_range = np.arange(test_sorted.min(), test_sorted.max() + 1)
    if len(full_range) != len(test_sorted):
        tx_ext = sp.lil_matrix((len(full_range), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full_range), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext

    feats = sp.vstack([sp.csr_matrix(parts["allx"]), sp.csr_matrix(tx)]).tolil()
    feats[test_idx, :] = feats[test_sorted, :]
    onehot = np.vstack([np.asarray(parts["ally"]), ty])
    onehot[test_idx, :] = onehot[test_sorted, :]
    n = feats.shape[0]

    # nodes absent from every class keep label 0 (Citeseer has a handful)
    labels = np.argmax(onehot, axis=1).astype(np.int64)
    edges = [(u, v) for u, nbrs in parts["graph"].items() for v in nbrs if u < n and v < n]
    graph = Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    bundle = DatasetBundle(name, graph, np.asarray(feats.todense(), dtype=np.float64), labels)
    return save_bundle(bundle, out_dir, fmt)


def convert_npz(npz_path, out_dir, name=None, fmt="csv"):
    """Convert a shchur-style ``.npz`` release (Amazon Photo etc.) into a bundle."""
    npz_path = Path(npz_path)
    if not npz_path.exists():
        raise BundleError(f"{npz_path}: file not found")
    with np.load(npz_path, allow_pickle=True) as z:
        adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]),
                            shape=z["adj_shape"])
        if "attr_data" in z:
            x = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]),
                              shape=z["attr_shape"]).toarray()
        else:
            x = np.asarray(z["attr_matrix"])
        labels = np.asarray(z["labels"], dtype=np.int64)
    coo = sp.triu(adj + adj.T, k=1).tocoo()
    _, labels = np.unique(labels, return_inverse=True)
    graph = Graph.from_edges(adj.shape[0], np.stack([coo.row, coo.col], axis=1))
    bundle = DatasetBundle(name or npz_path.stem, graph, x.astype(np.float64), labels)
    return save_bundle(bundle, out_dir, fmt)


# ----------------------------------------------------------------------------
# masks, splits, synthetic graphs

def generate_mask(n, d, rate, mode="uniform-entry", seed=0):
    """Boolean known-mask of shape (n, d); True marks an observed entry."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {rate}")
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}")
    rng = np.random.default_rng(seed)
    if mode == "uniform-entry":
        return rng.random((n, d)) >= rate
    rows = rng.random(n) >= rate
    return np.ascontiguousarray(np.broadcast_to(rows[:, None], (n, d)))


def make_splits(labels, per_class_train=20, n_val=1500, seed=0):
    """Stratified train set, random validation set, remaining nodes as test."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    train = []
    for c in range(int(labels.max()) + 1):
        members = np.flatnonzero(labels == c)
        if len(members) < per_class_train:
            raise ValueError(f"class {c} has {len(members)} nodes, "
                             f"fewer than per_class_train={per_class_train}")
        train.append(rng.permutation(members)[:per_class_train])
    train = np.sort(np.concatenate(train))
    rest = rng.permutation(np.setdiff1d(np.arange(len(labels)), train))
    if n_val > len(rest):
        raise ValueError(f"n_val={n_val} exceeds the {len(rest)} nodes left after training")
    return LabeledSplits(labels, train, np.sort(rest[:n_val]), np.sort(rest[n_val:]))


def sbm_generate(block_sizes, p_in, p_out, n_features, class_separation, seed=0,
                 name="sbm"):
    """Stochastic block model with Gaussian class-conditional features.

    Class means are drawn from N(0, I) and multiplied by ``class_separation``;
    each node's features are its class mean plus unit Gaussian noise.
    """
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes).astype(np.int64)
    n = len(labels)
    edges = []
    for start in range(0, n, 512):
        rows = np.arange(start, min(start + 512, n))
        draw = rng.random((len(rows), n))
        prob = np.where(labels[rows, None] == labels[None, :], p_in, p_out)
        hit = (draw < prob) & (np.arange(n)[None, :] > rows[:, None])
        r, c = np.nonzero(hit)
        edges.append(np.stack([rows[r], c], axis=1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    means = rng.standard_normal((len(block_sizes), n_features)) * class_separation
    x = means[labels] + rng.standard_normal((n, n_features))
    return DatasetBundle(name, Graph.from_edges(n, edges), x, labels)
