"""Feature reconstruction by propagate-and-reset diffusion.

The known entries act as a boundary condition: each step multiplies the
features by the propagation operator and then writes the observed values
back. The limit is the minimum Dirichlet-energy interpolation, which
:func:`direct_solve` computes with a dense factorization for checking.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from hyperprop.data import MaskedFeatures
from hyperprop.gcn import TrainConfig, normalize_adjacency, train_gcn
from hyperprop.hypergraph import (HYPERGRAPH_MODES, build_feature_hypergraph, fuse,
                                  propagation_matrix, pseudo_label_values)
from hyperprop.sparse import spmm

log = logging.getLogger(__name__)

FUSION_MODES = ("off", "soft-dot", "hard-indicator")
REBUILD_MODES = ("once", "per-round")


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, channels, nodes):
        self.channels = list(channels)
        self.nodes = sorted(set(nodes))
        super().__init__(
            f"interpolation is singular for channels {self.channels[:10]}: unknown nodes "
            f"{self.nodes[:20]} are not reachable from any known node")


class ReconstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SghfpConfig:
    rounds: int = 3
    steps: int = 50
    knn_k: int = 10
    hypergraph_mode: str = "topology"
    fusion: str = "soft-dot"
    rebuild_feature_hypergraph: str = "per-round"
    gcn: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    tol: float = None

    def __post_init__(self):
        if self.rounds < 1 or self.steps < 1:
            raise ValueError("rounds and steps must both be at least 1")
        if self.hypergraph_mode not in HYPERGRAPH_MODES:
            raise ValueError(f"unknown hypergraph mode {self.hypergraph_mode!r}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if self.rebuild_feature_hypergraph not in REBUILD_MODES:
            raise ValueError(f"unknown rebuild mode {self.rebuild_feature_hypergraph!r}")

    @classmethod
    def literal(cls, iterations=50, **kwargs):
        """Rebuild both hypergraphs before every single propagation step."""
        return cls(rounds=iterations, steps=1, **kwargs)


@dataclass
class ReconstructionResult:
    features: np.ndarray
    energy_trace: np.ndarray
    rounds_run: int = 1
    steps_run: int = 0


def _theta(theta):
    return getattr(theta, "theta", theta)


def dirichlet_energy(theta, x):
    """1/2 sum over channels of x^T (I - theta) x."""
    t = _theta(theta)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if t.shape[1] != x.shape[0]:
        raise ValueError(f"operator {t.shape} does not match features {x.shape}")
    return 0.5 * float(np.sum(x * x) - np.sum(x * spmm(t, x)))


def fp_step(theta, mf: MaskedFeatures) -> MaskedFeatures:
    """One propagation step followed by resetting the known entries."""
    out = spmm(_theta(theta), mf.features)
    np.copyto(out, mf.features, where=mf.known)
    return MaskedFeatures(out, mf.known)


def fp_reconstruct(theta, mf: MaskedFeatures, steps=50, tol=None) -> ReconstructionResult:
    """Run ``steps`` propagate-and-reset iterations, recording the energy after each.

    With ``tol`` set, stops early once no entry moves by more than ``tol``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    t = _theta(theta)
    x = mf.features.copy()
    prod = spmm(t, x)
    energy = []
    for step in range(1, steps + 1):
        new = prod
        np.copyto(new, mf.features, where=mf.known)
        done = tol is not None and np.max(np.abs(new - x), initial=0.0) < tol
        x = new
        # theta @ x serves both the energy of this step and the next propagation
        prod = spmm(t, x)
        energy.append(0.5 * float(np.sum(x * x) - np.sum(x * prod)))
        if done:
            break
    return ReconstructionResult(x, np.array(energy), 1, step)


def direct_solve(theta, mf: MaskedFeatures, dense_limit=2000):
    """Closed-form interpolation x_u = (I - theta_uu)^-1 theta_uk x_k per channel.

    Channels sharing an unknown pattern share one LU factorization.
    """
    t = _theta(theta)
    n = t.shape[0]
    if n > dense_limit:
        raise ValueError(f"{n} nodes exceeds the dense limit of {dense_limit}")
    dense = t.toarray()
    x = mf.features.copy()
    unknown = ~mf.known
    groups = {}
    for c in range(x.shape[1]):
        if unknown[:, c].any():
            groups.setdefault(unknown[:, c].tobytes(), []).append(c)

    bad_channels, bad_nodes = [], []
    for key, chans in groups.items():
        u = np.frombuffer(key, dtype=bool)
        k = ~u
        stuck = _unreachable(t, u)
        if stuck.size:
            bad_channels += chans
            bad_nodes += stuck.tolist()
            continue
        a = np.eye(u.sum()) - dense[np.ix_(u, u)]
        rhs = dense[np.ix_(u, k)] @ x[np.ix_(k, chans)]
        x[np.ix_(u, chans)] = scipy.linalg.lu_solve(scipy.linalg.lu_factor(a), rhs)
    if bad_channels:
        raise SingularSystemError(bad_channels, bad_nodes)
    return x


def _unreachable(t, unknown):
    """Unknown nodes in a coupled component with no path to a known node."""
    idx = np.flatnonzero(unknown)
    sub = t[idx][:, idx]
    n_comp, comp = connected_components(sub, directed=False)
    touches_known = np.zeros(n_comp, dtype=bool)
    to_known = np.asarray(t[idx][:, np.flatnonzero(~unknown)].sum(axis=1)).ravel() > 0
    np.logical_or.at(touches_known, comp, to_known)
    # an unknown node with an all-zero row keeps 0 and is not singular
    coupled = np.zeros(n_comp, dtype=bool)
    np.logical_or.at(coupled, comp, np.diff(sub.indptr) > 0)
    return idx[~touches_known[comp] & coupled[comp]]


def fp_baseline(graph, mf: MaskedFeatures, steps=50) -> ReconstructionResult:
    """Plain feature propagation: the graph itself as two-node hyperedges."""
    theta = propagation_matrix(build_feature_hypergraph(mf, graph, mode="pairwise"))
    return fp_reconstruct(theta, mf, steps)


def _round_seed(seed, round_index):
    return int(np.random.SeedSequence([seed, round_index]).generate_state(1)[0])


def sghfp_reconstruct(bundle, mask, splits, cfg=SghfpConfig()):
    """Alternate hypergraph construction, pseudo-labelling and propagation.

    Round 1 propagates over the feature hypergraph alone. Every later round
    trains the GCN on the current reconstruction, weights the feature
    hypergraph by pseudo-label agreement, and continues propagating from the
    current features. Returns the reconstruction and the last pseudo-labels
    (None when no GCN was trained).
    """
    mf = mask if isinstance(mask, MaskedFeatures) else MaskedFeatures.from_full(bundle.features, mask)
    graph = bundle.graph
    n_comp, comp = connected_components(graph.adjacency, directed=False)
    if n_comp > 1:
        has_known = np.zeros(n_comp, dtype=bool)
        np.logical_or.at(has_known, comp, mf.known.any(axis=1))
        if not has_known.all():
            log.warning("%d connected components have no known feature entry",
                        int((~has_known).sum()))

    a_hat = normalize_adjacency(graph) if cfg.fusion != "off" and cfg.rounds > 1 else None
    theta_f = propagation_matrix(build_feature_hypergraph(
        mf.features, graph, cfg.hypergraph_mode, cfg.knn_k, mf.known))
    x = mf.features
    probs = None
    energy = []
    for r in range(cfg.rounds):
        if r > 0 and cfg.rebuild_feature_hypergraph == "per-round":
            theta_f = propagation_matrix(build_feature_hypergraph(
                x, graph, cfg.hypergraph_mode, cfg.knn_k))
        theta = theta_f
        if r > 0 and cfg.fusion != "off":
            gcn_cfg = replace(cfg.gcn, seed=_round_seed(cfg.seed, r))
            try:
                probs = train_gcn(a_hat, x, splits.labels, splits, gcn_cfg).probs
            except Exception as err:
                raise ReconstructionError(f"pseudo-label GCN failed in round {r + 1}: {err}") from err
            theta = fuse(theta_f, pseudo_label_values(probs, theta_f.theta, cfg.fusion))
        res = fp_reconstruct(theta, MaskedFeatures(x, mf.known), cfg.steps, cfg.tol)
        x = res.features
        energy.append(res.energy_trace)
    return ReconstructionResult(x, np.concatenate(energy), cfg.rounds,
                                sum(len(e) for e in energy)), probs
