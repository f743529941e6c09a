"""Probabilistic classifiers trained on soft labels, plus output clipping."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

KINDS = ("logistic", "mlp1")


class TrainingError(RuntimeError):
    pass


@dataclass
class ClassifierModel:
    kind: str
    input_dim: int
    num_classes: int
    params: dict = field(default_factory=dict)
    hidden: int = 16
    l2_lambda: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")

    def copy(self) -> "ClassifierModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": self.hidden,
            "l2_lambda": self.l2_lambda,
            "params": {k: self.params[k].tolist() for k in sorted(self.params)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        params = {k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()}
        return cls(d["kind"], int(d["input_dim"]), int(d["num_classes"]), params,
                   int(d.get("hidden", 16)), float(d.get("l2_lambda", 0.0)))


def init_model(kind: str, input_dim: int, num_classes: int, seed=None, hidden: int = 16,
               l2_lambda: float = 0.0, init_scale: float = 0.1,
               zero_output: bool = False) -> ClassifierModel:
    """Parameters uniform in [-init_scale, init_scale].

    ``init_scale=0`` or ``zero_output=True`` (output layer only) gives a
    classifier whose initial predictions are exactly uniform.
    """
    rng = np.random.default_rng(seed)
    d, K = input_dim, num_classes

    def u(*shape, out=False):
        draw = rng.uniform(-init_scale, init_scale, size=shape) if init_scale else np.zeros(shape)
        return np.zeros(shape) if out and zero_output else draw

    if kind == "logistic":
        params = {"W": u(d, K, out=True), "b": u(K, out=True)}
    elif kind == "mlp1":
        params = {"W1": u(d, hidden), "b1": u(hidden), "W2": u(hidden, K, out=True),
                  "b2": u(K, out=True)}
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    return ClassifierModel(kind, d, K, params, hidden, l2_lambda)


def _check_width(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.input_dim:
        raise ValueError(f"expected features of width {model.input_dim}, got shape {features.shape}")
    return features


def _forward(model, X):
    p = model.params
    if model.kind == "logistic":
        return X @ p["W"] + p["b"], None
    h = np.tanh(X @ p["W1"] + p["b1"])
    return h @ p["W2"] + p["b2"], h


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def predict_proba(model: ClassifierModel, features) -> np.ndarray:
    X = _check_width(model, features)
    logits, _ = _forward(model, X)
    p = np.exp(_log_softmax(logits))
    return p / p.sum(axis=1, keepdims=True)


def _l2(model):
    return model.l2_lambda * sum(float(np.sum(v * v)) for v in model.params.values())


def loss_weighted(model: ClassifierModel, features, q) -> float:
    """-sum_i sum_k q_ik log f(k; x_i) + l2_lambda * ||params||^2."""
    X = _check_width(model, features)
    logits, _ = _forward(model, X)
    return float(-np.sum(np.asarray(q) * _log_softmax(logits))) + _l2(model)


def loss_and_grad(model: ClassifierModel, features, q):
    X = _check_width(model, features)
    q = np.asarray(q, dtype=np.float64)
    logits, h = _forward(model, X)
    logp = _log_softmax(logits)
    loss = float(-np.sum(q * logp)) + _l2(model)
    dz = np.exp(logp) * q.sum(axis=1, keepdims=True) - q
    p = model.params
    lam2 = 2.0 * model.l2_lambda
    if model.kind == "logistic":
        grads = {"W": X.T @ dz, "b": dz.sum(axis=0)}
    else:
        da = (dz @ p["W2"].T) * (1.0 - h * h)
        grads = {"W1": X.T @ da, "b1": da.sum(axis=0), "W2": h.T @ dz, "b2": dz.sum(axis=0)}
    for k in grads:
        grads[k] = grads[k] + lam2 * p[k]
    return loss, grads


def fit_weighted(model: ClassifierModel, features, q, epochs: int = 100,
                 learning_rate: float = 0.1, optimizer: str = "gd",
                 backtracking: bool = False) -> ClassifierModel:
    """Full-batch minimisation of ``loss_weighted``; returns a new model.

    Steps use the gradient of the per-sample mean loss, so ``learning_rate``
    does not need rescaling with the number of tasks. With ``backtracking``
    a step is halved until the loss does not increase.
    """
    X = _check_width(model, features)
    q = np.asarray(q, dtype=np.float64)
    n = max(X.shape[0], 1)
    model = model.copy()
    if optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(v) for k, v in model.params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    for epoch in range(epochs):
        loss, grads = loss_and_grad(model, X, q)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch}")
        if optimizer == "adam":
            t = epoch + 1
            step = {}
            for k, g in grads.items():
                g = g / n
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                step[k] = (m[k] / (1 - b1 ** t)) / (np.sqrt(v[k] / (1 - b2 ** t)) + eps)
        else:
            step = {k: g / n for k, g in grads.items()}
        lr = learning_rate
        while True:
            trial = replace(model, params={k: model.params[k] - lr * step[k] for k in step})
            if not backtracking or loss_weighted(trial, X, q) <= loss or lr < 1e-12:
                break
            lr *= 0.5
        if backtracking and loss_weighted(trial, X, q) > loss:
            break
        model = trial
    return model


def clip_probs(rows, c: float) -> np.ndarray:
    """Cap every probability at ``c``, sharing the excess evenly among uncapped classes.

    Rows with no entry above ``c`` are returned unchanged.
    """
    rows = np.array(rows, dtype=np.float64)
    K = rows.shape[1]
    if not c > 1.0 / K:
        raise ValueError(f"clip value {c} must exceed 1/K = {1.0 / K}")
    if c >= 1.0:
        return rows
    todo = np.flatnonzero((rows > c).any(axis=1))
    sub = rows[todo]
    capped = np.zeros(sub.shape, dtype=bool)
    while True:
        over = sub > c
        if not over.any():
            break
        excess = np.where(over, sub - c, 0.0).sum(axis=1, keepdims=True)
        capped |= over
        sub = np.where(capped, np.minimum(sub, c), sub)
        free = (~capped).sum(axis=1, keepdims=True)
        sub = np.where(capped, sub, sub + excess / np.maximum(free, 1))
    rows[todo] = sub
    return rows
