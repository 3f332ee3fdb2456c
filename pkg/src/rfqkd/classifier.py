"""Fully-connected binary classifier for excised waveforms, trained by backprop.

Score 0 means SPD1 (detector 0), score 1 means SPD2 (detector 1).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

DEFAULT_DIMS = (256, 128, 64, 32, 16, 8, 1)

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
}


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list  # weights[l] has shape (layer_dims[l], layer_dims[l + 1])
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "logistic"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {self.layer_dims}")
        if self.layer_dims[-1] != 1:
            raise ValueError("last layer must have a single output")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation != "logistic":
            raise ValueError("only the logistic output is supported")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer transition")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise ValueError(f"layer {l}: shapes {W.shape}/{b.shape} do not match dims")

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def params(self):
        """Flat list of parameter arrays, weights and biases interleaved per layer."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "gd"
    patience: int | None = None
    min_delta: float = 0.0
    target_loss: float | None = 1e-4

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows: true label, cols: predicted label
    scores: np.ndarray = field(repr=False)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def init_model(layer_dims=DEFAULT_DIMS, seed: int = 0, input_len: int | None = None,
               hidden_activation: str = "relu") -> MlpModel:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if input_len is not None and dims[0] != input_len:
        raise ValueError(f"first layer has {dims[0]} inputs, expected {input_len}")
    rng = np.random.default_rng(seed)
    weights = [rng.standard_normal((a, b)) / np.sqrt(a) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return MlpModel(dims, weights, biases, hidden_activation)


def _logits(model: MlpModel, X, keep=False):
    act = _ACTIVATIONS[model.hidden_activation][0]
    a = X
    cache = [(None, X)]
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = z if l == last else act(z)
        if keep:
            cache.append((z, a))
    return (a[:, 0], cache) if keep else a[:, 0]


def _as_batch(model, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"input has {X.shape[1]} samples, model expects {model.n_inputs}")
    return X, single


def forward(model: MlpModel, x):
    """Logistic score in (0, 1) for one input vector, or an array for a batch."""
    X, single = _as_batch(model, x)
    p = expit(_logits(model, X))
    return float(p[0]) if single else p


def predict(model: MlpModel, X) -> np.ndarray:
    return (np.atleast_1d(forward(model, X)) >= 0.5).astype(int)


def loss(model: MlpModel, X, y) -> float:
    """Mean binary cross-entropy, evaluated from logits."""
    X, _ = _as_batch(model, X)
    z = _logits(model, X)
    y = np.asarray(y, dtype=float)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def backprop(model: MlpModel, X, y):
    """Gradients of :func:`loss` w.r.t. every parameter, ordered like ``model.params()``."""
    X, _ = _as_batch(model, X)
    y = np.asarray(y, dtype=float)
    z_out, cache = _logits(model, X, keep=True)
    dact = _ACTIVATIONS[model.hidden_activation][1]
    delta = (expit(z_out) - y)[:, None] / X.shape[0]
    grads = []
    for l in range(len(model.weights) - 1, -1, -1):
        a_prev = cache[l][1]
        grads.append(delta.sum(axis=0))
        grads.append(a_prev.T @ delta)
        if l > 0:
            z, a = cache[l]
            delta = (delta @ model.weights[l].T) * dact(z, a)
    grads.reverse()  # now [dW0, db0, dW1, db1, ...]
    return grads


def _check_dataset(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty dataset")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per row of X")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise ValueError("dataset holds a single class")
    return X, y.astype(float)


def train(model: MlpModel, X, y, cfg: TrainConfig = TrainConfig()):
    """Minimize binary cross-entropy; returns (trained copy, per-epoch loss).

    Loss history entries are the full-training-set loss after each epoch.
    Stops early once the loss falls below ``cfg.target_loss`` or has not
    improved by ``cfg.min_delta`` for ``cfg.patience`` epochs.
    """
    X, y = _check_dataset(X, y)
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"dataset rows have {X.shape[1]} samples, model expects {model.n_inputs}")
    model = model.copy()
    params = model.params()
    rng = np.random.default_rng(cfg.seed)
    bs = X.shape[0] if cfg.batch_size is None else min(cfg.batch_size, X.shape[0])
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    best, stale = np.inf, 0
    for _ in range(cfg.epochs):
        order = rng.permutation(X.shape[0]) if bs < X.shape[0] else np.arange(X.shape[0])
        for start in range(0, X.shape[0], bs):
            idx = order[start:start + bs]
            grads = backprop(model, X[idx], y[idx])
            step += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                if cfg.optimizer == "gd":
                    p -= cfg.learning_rate * g
                    continue
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                mhat = mi / (1 - b1**step)
                vhat = vi / (1 - b2**step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        history.append(loss(model, X, y))
        if cfg.target_loss is not None and history[-1] < cfg.target_loss:
            break
        if cfg.patience is not None:
            if history[-1] < best - cfg.min_delta:
                best, stale = history[-1], 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return model, history


def numerical_gradient(model: MlpModel, X, y, step: float = 1e-5):
    """Central finite-difference gradient of :func:`loss`, same layout as :func:`backprop`."""
    probe = model.copy()
    out = []
    for p in probe.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss(probe, X, y)
            flat[i] = old - step
            down = loss(probe, X, y)
            flat[i] = old
            gflat[i] = (up - down) / (2 * step)
        out.append(g)
    return out


def gradient_check(model: MlpModel, X, y, step: float = 1e-5, floor: float = 1e-8) -> float:
    """Max relative error |a - n| / max(|a| + |n|, floor) between backprop and finite differences."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    analytic = backprop(model, X, y)
    numeric = numerical_gradient(model, X, y, step)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(rel)))
    return worst


def evaluate(model: MlpModel, X, y) -> EvalReport:
    """Threshold scores at 0.5 and tabulate accuracy and the 2x2 confusion matrix."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty test set")
    scores = np.atleast_1d(forward(model, X))
    pred = (scores >= 0.5).astype(int)
    conf = np.zeros((2, 2), dtype=int)
    np.add.at(conf, (y, pred), 1)
    return EvalReport(float(np.trace(conf) / conf.sum()), conf, scores)
