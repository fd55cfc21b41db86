"""Metrics, the label-propagation baseline, the experiment grid and embedding export."""

import csv
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from hyperprop.data import (MASK_MODES, MaskedFeatures, generate_mask, load_bundle,
                            make_splits)
from hyperprop.gcn import TrainConfig, hidden_embedding, normalize_adjacency, train_gcn
from hyperprop.propagation import SghfpConfig, fp_baseline, sghfp_reconstruct
from hyperprop.sparse import spmm

log = logging.getLogger(__name__)

# "fp-fh" is the feature-hypergraph ablation (no pseudo-labels);
# "zero-impute-gcn" is a sanity baseline that is not in the published tables.
METHODS = ("zero-impute-gcn", "fp", "fp-fh", "sghfp", "lp")


def accuracy(pred, truth, idx):
    idx = np.asarray(idx)
    if len(idx) == 0:
        raise ValueError("accuracy over an empty index set")
    return float(np.mean(np.asarray(pred)[idx] == np.asarray(truth)[idx]))


def label_propagation(graph, labels, train_idx, steps=50):
    """Diffuse one-hot training labels over A_hat, resetting training rows each step.

    Nodes that no label reaches score all zeros and fall to class 0.
    """
    train_idx = np.asarray(train_idx)
    if len(train_idx) == 0:
        raise ValueError("train_idx is empty")
    labels = np.asarray(labels)
    a_hat = normalize_adjacency(graph)
    seed = np.zeros((graph.n_nodes, int(labels.max()) + 1))
    seed[train_idx, labels[train_idx]] = 1.0
    y = seed.copy()
    for _ in range(steps):
        y = spmm(a_hat, y)
        y[train_idx] = seed[train_idx]
    return np.argmax(y, axis=1)


def silhouette_score(points, labels, chunk=1024):
    """Mean silhouette (b - a) / max(a, b) under Euclidean distance.

    Points in singleton clusters score 0, as does a point with a = b = 0.
    """
    x = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes, lab = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("silhouette needs at least two clusters")
    n, k = len(x), len(classes)
    counts = np.bincount(lab, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    sq = np.einsum("ij,ij->i", x, x)
    scores = np.zeros(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        dist = np.sqrt(np.maximum(d2, 0.0))
        dist[np.arange(stop - start), np.arange(start, stop)] = 0.0
        sums = dist @ onehot
        own = lab[start:stop]
        rows = np.arange(stop - start)
        size = counts[own]
        a = np.where(size > 1, sums[rows, own] / np.maximum(size - 1, 1), 0.0)
        mean_other = sums / counts[None, :]
        mean_other[rows, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        scores[start:stop] = np.where(size > 1, s, 0.0)
    return float(scores.mean())


def export_embeddings(bundle, features, params, path):
    """Write hidden-layer activations as CSV (``node_id,label,e0..``).

    The silhouette score of the embedding goes to ``<stem>.silhouette.json``.
    """
    path = Path(path)
    emb = hidden_embedding(params, normalize_adjacency(bundle.graph), features)
    header = ["node_id", "label"] + [f"e{i}" for i in range(emb.shape[1])]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(len(emb)):
            w.writerow([i, int(bundle.labels[i])] + [repr(float(v)) for v in emb[i]])
    score = silhouette_score(emb, bundle.labels)
    path.with_name(path.stem + ".silhouette.json").write_text(
        json.dumps({"silhouette": score}) + "\n")
    return score


# ----------------------------------------------------------------------------
# experiment grid

def derive_seed(master, *keys):
    """Counter-based seed: one independent stream per (master, keys) tuple."""
    keys = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(master, spawn_key=keys).generate_state(1)[0])


@dataclass
class ExperimentSpec:
    bundle: str
    missing_rates: list = field(default_factory=lambda: [0.0, 0.5, 0.9, 0.99])
    mask_mode: str = "uniform-entry"
    methods: list = field(default_factory=lambda: ["fp", "sghfp"])
    n_seeds: int = 10
    master_seed: int = 0
    largest_component: bool = True
    train_per_class: int = 20
    n_val: int = 1500
    lp_steps: int = 50
    fp_steps: int = 50
    gcn: dict = field(default_factory=dict)
    sghfp: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not 0.0 <= r <= 1.0 for r in self.missing_rates):
            raise ValueError("missing rates must lie in [0, 1]")
        # rate 0 first, so relative drops are known when later cells are written
        self.missing_rates = sorted(float(r) for r in self.missing_rates)
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mask_mode!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_json(cls, path):
        """Load a spec file. ``dataset`` names a bundle under $HYPERPROP_DATA
        and may stand in for an explicit ``bundle`` path."""
        raw = json.loads(Path(path).read_text())
        if "dataset" in raw:
            name = raw.pop("dataset")
            raw.setdefault("bundle", str(Path(os.environ.get("HYPERPROP_DATA", "data")) / name))
        allowed = {f.name for f in fields(cls)}
        extra = set(raw) - allowed
        if extra:
            raise ValueError(f"{path}: unknown keys {sorted(extra)}")
        spec = cls(**raw)
        if not Path(spec.bundle).is_absolute():
            spec.bundle = str((Path(path).parent / spec.bundle).resolve())
        return spec

    def train_config(self, seed):
        return TrainConfig(**{**self.gcn, "seed": seed})

    def sghfp_config(self, seed, **overrides):
        opts = {**self.sghfp, **overrides}
        opts["gcn"] = self.train_config(seed)
        return SghfpConfig(**opts, seed=seed)


@dataclass
class RunResult:
    method: str
    rate: float
    seed: int
    test_accuracy: float = None
    relative_drop: float = None
    wall_time: float = 0.0
    error: str = None


def reconstruct(method, bundle, mf, splits, spec, seed):
    """Reconstructed features for one method, or None for label propagation."""
    if method == "zero-impute-gcn":
        return mf.features
    if method == "fp":
        return fp_baseline(bundle.graph, mf, spec.fp_steps).features
    if method == "fp-fh":
        cfg = spec.sghfp_config(seed, fusion="off")
        return sghfp_reconstruct(bundle, mf, splits, cfg)[0].features
    if method == "sghfp":
        return sghfp_reconstruct(bundle, mf, splits, spec.sghfp_config(seed))[0].features
    return None


def run_cell(spec, bundle, method, rate_index, seed_index):
    rate = spec.missing_rates[rate_index]
    start = time.perf_counter()
    result = RunResult(method, rate, seed_index)
    try:
        splits = make_splits(bundle.labels, spec.train_per_class, spec.n_val,
                             derive_seed(spec.master_seed, "split", seed_index))
        if method == "lp":
            pred = label_propagation(bundle.graph, bundle.labels, splits.train, spec.lp_steps)
        else:
            known = generate_mask(*bundle.features.shape, rate, spec.mask_mode,
                                  derive_seed(spec.master_seed, "mask", rate_index, seed_index))
            mf = MaskedFeatures.from_full(bundle.features, known)
            method_seed = derive_seed(spec.master_seed, method, rate_index, seed_index)
            x = reconstruct(method, bundle, mf, splits, spec, method_seed)
            trained = train_gcn(normalize_adjacency(bundle.graph), x, bundle.labels, splits,
                                spec.train_config(derive_seed(spec.master_seed, "eval", seed_index)))
            pred = trained.predict()
        result.test_accuracy = accuracy(pred, bundle.labels, splits.test)
    except Exception as err:  # recorded per cell; the grid carries on
        log.exception("cell %s rate=%s seed=%s failed", method, rate, seed_index)
        result.error = f"{type(err).__name__}: {err}"
    result.wall_time = time.perf_counter() - start
    return result


def _worker(args):
    spec, method, ri, si = args
    return run_cell(spec, _bundle_for(spec), method, ri, si)


_BUNDLES = {}


def _bundle_for(spec):
    key = (spec.bundle, spec.largest_component)
    if key not in _BUNDLES:
        _BUNDLES[key] = load_bundle(spec.bundle, spec.largest_component)
    return _BUNDLES[key]


def default_workers():
    cap = os.environ.get("HYPERPROP_THREADS")
    return max(1, int(cap)) if cap else 1


def run_grid(spec, out_dir=None, workers=None):
    """Run every (method, rate, seed) cell and return (results, summary rows).

    With ``out_dir`` set, each cell is appended to ``results.jsonl`` as soon as
    it completes. Cells are consumed in cell order, so the files do not depend
    on the worker count. Wall times go to a separate ``timings.csv``.
    """
    cells = [(m, ri, si) for m in spec.methods
             for ri in range(len(spec.missing_rates)) for si in range(spec.n_seeds)]
    workers = workers or default_workers()
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.jsonl").write_text("")

    def stream():
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                yield from pool.map(_worker, [(spec, *c) for c in cells])
        else:
            bundle = _bundle_for(spec)
            for c in cells:
                yield run_cell(spec, bundle, *c)

    results, base = [], {}
    for r in stream():
        if r.rate == 0.0 and r.test_accuracy is not None:
            base[(r.method, r.seed)] = r.test_accuracy
        ref = base.get((r.method, r.seed))
        if r.test_accuracy is not None and ref:
            r.relative_drop = 1.0 - r.test_accuracy / ref
        results.append(r)
        if out is not None:
            rec = asdict(r)
            rec.pop("wall_time")
            with open(out / "results.jsonl", "a") as f:
                f.write(json.dumps(rec) + "\n")
    summary = summarize(results, spec)
    if out is not None:
        write_summary(results, summary, out)
    return results, summary


def summarize(results, spec):
    rows = []
    for method in spec.methods:
        means = {}
        for rate in spec.missing_rates:
            accs = np.array([r.test_accuracy for r in results if r.method == method
                             and r.rate == rate and r.test_accuracy is not None])
            n_failed = sum(1 for r in results if r.method == method and r.rate == rate
                           and r.test_accuracy is None)
            mean = float(accs.mean()) if len(accs) else float("nan")
            std = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
            means[rate] = mean
            rows.append({"method": method, "rate": rate, "n": len(accs), "failed": n_failed,
                         "mean": mean, "std": std})
        for row in rows[-len(spec.missing_rates):]:
            ref = means.get(0.0)
            row["relative_drop"] = 1.0 - row["mean"] / ref if ref else float("nan")
    return rows


def write_summary(results, summary, out_dir):
    out = Path(out_dir)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["method", "rate", "n", "failed", "mean", "std",
                                          "relative_drop"])
        w.writeheader()
        for row in summary:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    with open(out / "timings.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "rate", "seed", "wall_time"])
        for r in results:
            w.writerow([r.method, r.rate, r.seed, f"{r.wall_time:.3f}"])
