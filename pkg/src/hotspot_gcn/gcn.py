"""Graph convolutional network in numpy with hand-written gradients.

Each layer computes ``A @ dropout(H) @ W + b`` where A is the normalized
adjacency; hidden layers apply ReLU, the output layer is linear and feeds a
softmax cross-entropy over the masked nodes.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


@dataclass
class GcnConfig:
    hidden_dims: list[int] = field(default_factory=lambda: [128])
    dropout: float = 0.5
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        self.hidden_dims = [int(h) for h in self.hidden_dims]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GcnParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "GcnParams":
        return GcnParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_params(dims: list[int], rng: np.random.Generator) -> GcnParams:
    """Glorot-uniform weights, zero biases. ``dims`` = [in, hidden..., out]."""
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return GcnParams(ws, bs)


@dataclass
class ForwardCache:
    adj: sp.spmatrix
    inputs: list[np.ndarray]       # dropped-out input of each layer
    keep_scales: list[np.ndarray | None]
    pre_acts: list[np.ndarray]
    logits: np.ndarray


class CacheError(ValueError):
    pass


def gcn_forward(params: GcnParams, adj, X, dropout: float = 0.0,
                rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass. Dropout is applied only when ``rng`` is given and p > 0."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if adj.shape != (n, n):
        raise ValueError(f"adjacency {adj.shape} does not match {n} nodes")
    if X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"features have {X.shape[1]} columns, first layer expects "
                         f"{params.weights[0].shape[0]}")
    h = X
    inputs, scales, pre = [], [], []
    last = params.n_layers - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        if rng is not None and dropout > 0:
            scale = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * scale
        else:
            scale = None
        inputs.append(h)
        scales.append(scale)
        z = adj @ (h @ W) + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
    return h, ForwardCache(adj, inputs, scales, pre, h)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def masked_cross_entropy(logits, labels, mask) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over masked nodes, plus softmax rows."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("loss mask selects no nodes")
    z = np.asarray(logits, dtype=float)
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    labels = np.asarray(labels)
    idx = np.flatnonzero(mask)
    nll = logsum[idx] - shifted[idx, labels[idx]]
    return float(nll.mean()), softmax(z)


def l2_penalty(params: GcnParams, weight_decay: float) -> float:
    return 0.5 * weight_decay * sum(float(np.sum(W * W)) for W in params.weights)


def gcn_backward(params: GcnParams, cache: ForwardCache | None, labels, mask,
                 weight_decay: float = 0.0) -> GcnParams:
    """Gradient of masked cross-entropy + weight_decay/2 * sum ||W||^2.

    Biases are not decayed. Returned as a GcnParams of gradients.
    """
    if cache is None or len(cache.pre_acts) != params.n_layers:
        raise CacheError("backward needs the cache from a forward pass of these params")
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("loss mask selects no nodes")
    labels = np.asarray(labels)
    adj_t = cache.adj.T
    probs = softmax(cache.logits)
    dz = np.zeros_like(probs)
    dz[idx] = probs[idx]
    dz[idx, labels[idx]] -= 1.0
    dz /= idx.size

    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        W = params.weights[k]
        dm = adj_t @ dz
        gw[k] = cache.inputs[k].T @ dm + weight_decay * W
        gb[k] = dz.sum(axis=0)
        if k == 0:
            break
        dh = dm @ W.T
        if cache.keep_scales[k] is not None:
            dh = dh * cache.keep_scales[k]
        dz = dh * (cache.pre_acts[k - 1] > 0)
    return GcnParams(gw, gb)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tensors: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in tensors], [np.zeros_like(p) for p in tensors])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,train_acc,val_acc"]
        for e in range(len(self.train_loss)):
            lines.append(f"{e + 1},{self.train_loss[e]!r},{self.val_loss[e]!r},"
                         f"{self.train_accuracy[e]!r},{self.val_accuracy[e]!r}")
        return "\n".join(lines) + "\n"


class TrainingDiverged(RuntimeError):
    pass


def _accuracy(logits, labels, mask) -> float:
    return float(np.mean(np.argmax(logits[mask], axis=1) == labels[mask]))


def train(dataset, adj, config: GcnConfig) -> tuple[GcnParams, TrainHistory]:
    """Full-graph training with early stopping on validation loss.

    Returns the parameters from the epoch with the lowest validation loss.
    """
    if dataset.train_mask is None or dataset.val_mask is None:
        raise ValueError("dataset has no split masks; call with_split first")
    if dataset.n_classes < 2:
        raise ValueError("need at least two classes to train")
    if not dataset.val_mask.any():
        raise ValueError("validation mask is empty")
    X = dataset.features
    y = dataset.labels
    root = np.random.default_rng(config.seed)
    init_rng, drop_rng = root.spawn(2)
    dims = [X.shape[1], *config.hidden_dims, dataset.n_classes]
    params = init_params(dims, init_rng)
    state = AdamState.zeros_like(params.tensors())
    hist = TrainHistory()
    best_loss, best = np.inf, params.copy()

    for epoch in range(1, config.max_epochs + 1):
        logits, cache = gcn_forward(params, adj, X, config.dropout, drop_rng)
        loss, _ = masked_cross_entropy(logits, y, dataset.train_mask)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss {loss} at epoch {epoch}; "
                                   f"lower the learning rate (now {config.learning_rate})")
        grads = gcn_backward(params, cache, y, dataset.train_mask, config.weight_decay)
        adam_step(params.tensors(), grads.tensors(), state, config.learning_rate)

        logits, _ = gcn_forward(params, adj, X)
        tr_loss, _ = masked_cross_entropy(logits, y, dataset.train_mask)
        va_loss, _ = masked_cross_entropy(logits, y, dataset.val_mask)
        if not np.isfinite(va_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        hist.train_loss.append(tr_loss)
        hist.val_loss.append(va_loss)
        hist.train_accuracy.append(_accuracy(logits, y, dataset.train_mask))
        hist.val_accuracy.append(_accuracy(logits, y, dataset.val_mask))
        hist.stopped_epoch = epoch
        if va_loss < best_loss:
            best_loss, best = va_loss, params.copy()
            hist.best_epoch = epoch
        elif epoch - hist.best_epoch >= config.patience:
            log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
            break
    return best, hist


def predict_proba(params: GcnParams, adj, X) -> np.ndarray:
    logits, _ = gcn_forward(params, adj, X)
    return softmax(logits)
