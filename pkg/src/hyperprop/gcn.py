"""Two-layer graph convolutional network in numpy with analytic gradients."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from hyperprop.sparse import canonicalize, scale_cols, scale_rows, spmm


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 16
    lr: float = 0.005
    dropout: float = 0.5
    max_epochs: int = 200
    patience: int = 30
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


@dataclass
class GcnParams:
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError(f"w1 {self.w1.shape} and w2 {self.w2.shape} do not chain")

    def copy(self):
        return GcnParams(self.w1.copy(), self.w2.copy())

    def save(self, path):
        """Flat little-endian float64 blob plus a ``.json`` shape header."""
        path = Path(path)
        np.concatenate([self.w1.ravel(), self.w2.ravel()]).astype("<f8").tofile(path)
        header = {"dtype": "float64", "byteorder": "little",
                  "w1": list(self.w1.shape), "w2": list(self.w2.shape)}
        path.with_name(path.name + ".json").write_text(json.dumps(header))

    @classmethod
    def load(cls, path):
        path = Path(path)
        header = json.loads(path.with_name(path.name + ".json").read_text())
        flat = np.fromfile(path, dtype="<f8")
        n1 = int(np.prod(header["w1"]))
        if flat.size != n1 + int(np.prod(header["w2"])):
            raise ValueError(f"{path}: checkpoint size does not match its header")
        return cls(flat[:n1].reshape(header["w1"]).copy(), flat[n1:].reshape(header["w2"]).copy())


def normalize_adjacency(graph_or_adj):
    """A_hat = D~^-1/2 (A + I) D~^-1/2."""
    adj = getattr(graph_or_adj, "adjacency", graph_or_adj)
    a = canonicalize(adj + sp.identity(adj.shape[0], format="csr"))
    inv_sqrt = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    return scale_cols(scale_rows(a, inv_sqrt), inv_sqrt)


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d, hidden, n_classes, rng):
    return GcnParams(glorot(rng, d, hidden), glorot(rng, hidden, n_classes))


def dropout_masks(rng, shape_in, shape_hidden, p):
    """Inverted-dropout masks (entries 0 or 1/(1-p)) for the input and hidden layer."""
    if p == 0.0:
        return None
    keep = 1.0 - p
    return ((rng.random(shape_in) < keep) / keep,
            (rng.random(shape_hidden) < keep) / keep)


def _forward(params, a_hat, x, masks):
    x_in = x if masks is None else x * masks[0]
    pre = spmm(a_hat, x_in @ params.w1)
    hidden = np.maximum(pre, 0.0)
    h_in = hidden if masks is None else hidden * masks[1]
    logits = spmm(a_hat, h_in @ params.w2)
    return logits, (x_in, pre, h_in)


def gcn_forward(params, a_hat, x, masks=None):
    """logits = A_hat relu(A_hat X W1) W2; ``masks`` switches on dropout."""
    if x.shape[1] != params.w1.shape[0] or a_hat.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: A_hat {a_hat.shape}, X {x.shape}, W1 {params.w1.shape}")
    return _forward(params, a_hat, x, masks)[0]


def hidden_embedding(params, a_hat, x):
    return np.maximum(spmm(a_hat, x @ params.w1), 0.0)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels, idx):
    z = logits[idx]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(idx)), labels[idx]].mean()


def gcn_loss_and_grads(params, a_hat, x, labels, train_idx, masks=None, weight_decay=0.0):
    """Mean softmax cross-entropy over ``train_idx`` plus weight_decay/2 * |W|^2."""
    train_idx = np.asarray(train_idx)
    if len(train_idx) == 0:
        raise ValueError("train_idx is empty")
    logits, (x_in, pre, h_in) = _forward(params, a_hat, x, masks)
    decay = 0.5 * weight_decay * (np.sum(params.w1 ** 2) + np.sum(params.w2 ** 2))
    loss = cross_entropy(logits, labels, train_idx) + decay

    p = softmax(logits[train_idx])
    p[np.arange(len(train_idx)), labels[train_idx]] -= 1.0
    d_logits = np.zeros_like(logits)
    np.add.at(d_logits, train_idx, p / len(train_idx))

    a_t = a_hat.T
    d_z2 = spmm(a_t, d_logits)
    g2 = h_in.T @ d_z2 + weight_decay * params.w2
    d_hidden = d_z2 @ params.w2.T
    if masks is not None:
        d_hidden = d_hidden * masks[1]
    d_pre = d_hidden * (pre > 0)
    g1 = x_in.T @ spmm(a_t, d_pre) + weight_decay * params.w1
    return loss, GcnParams(g1, g2)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    def step(self, params, grads):
        self.step_count += 1
        t = self.step_count
        for name in ("w1", "w2"):
            g = getattr(grads, name)
            m, v = self.moments.get(name, (np.zeros_like(g), np.zeros_like(g)))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.moments[name] = (m, v)
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            setattr(params, name, getattr(params, name) - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return params


@dataclass
class TrainResult:
    params: GcnParams
    probs: np.ndarray
    val_curve: list
    best_epoch: int

    def predict(self):
        return np.argmax(self.probs, axis=1)


def train_gcn(a_hat, x, labels, splits, cfg=TrainConfig()):
    """Adam training with early stopping on validation accuracy.

    Ties in validation accuracy go to the lower validation loss. Returns the
    best checkpoint and its softmax probabilities for every node.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    rng = np.random.default_rng(cfg.seed)
    n_classes = int(labels.max()) + 1
    params = init_params(x.shape[1], cfg.hidden, n_classes, rng)
    opt = Adam(cfg.lr)
    val_idx = splits.val if len(splits.val) else splits.train

    best = (-1.0, np.inf)
    best_params, best_epoch, since_best = params.copy(), 0, 0
    val_curve = []
    for epoch in range(1, cfg.max_epochs + 1):
        masks = dropout_masks(rng, x.shape, (x.shape[0], cfg.hidden), cfg.dropout)
        loss, grads = gcn_loss_and_grads(params, a_hat, x, labels, splits.train,
                                         masks, cfg.weight_decay)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite training loss {loss} at epoch {epoch}")
        params = opt.step(params, grads)

        logits = gcn_forward(params, a_hat, x)
        val_acc = float(np.mean(np.argmax(logits[val_idx], axis=1) == labels[val_idx]))
        val_loss = float(cross_entropy(logits, labels, val_idx))
        val_curve.append(val_acc)
        if val_acc > best[0] or (val_acc == best[0] and val_loss < best[1]):
            best = (val_acc, val_loss)
            best_params, best_epoch, since_best = params.copy(), epoch, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    probs = softmax(gcn_forward(best_params, a_hat, x))
    return TrainResult(best_params, probs, val_curve, best_epoch)
