"""Linear classifier heads, binary cross-entropy losses and logistic regression.

All losses are written in their numerically stable form; gradients are
analytic and checked against central differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-7


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass
class LinearModel:
    """``weights`` is (classes, dim + 1); the last column is the bias."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[None]
        if w.ndim != 2 or w.shape[1] < 1:
            raise ValueError(f"weights must be (C, D+1), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        self.weights = w

    @classmethod
    def zeros(cls, dim: int, classes: int = 1) -> "LinearModel":
        return cls(np.zeros((classes, dim + 1)))

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def classes(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    steps: int = 1000
    l2: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def linear_forward(model: LinearModel, x) -> np.ndarray:
    """Logits ``W @ [x; 1]``. ``x`` may be a vector or a (n, D) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"input dim {x.shape[-1]} does not match model dim {model.dim}")
    w, b = model.weights[:, :-1], model.weights[:, -1]
    return x @ w.T + b


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sum_bce_loss(logits, targets) -> tuple[float, np.ndarray]:
    """Sum over classes of sigmoid cross-entropy, with gradient w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and targets {y.shape} differ")
    # -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    loss = float(np.sum(_softplus(z) - y * z))
    return loss, sigmoid(z) - y


def mask_bce_loss(pred, target) -> float:
    """Mean per-pixel binary cross-entropy of a predicted probability mask."""
    p = np.clip(np.asarray(pred, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {y.shape}")
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def mask_bce_grad(pred, target) -> np.ndarray:
    """Gradient of :func:`mask_bce_loss` w.r.t. the (unclamped interior) probabilities."""
    p = np.clip(np.asarray(pred, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    y = np.asarray(target, dtype=np.float64)
    return (p - y) / (p * (1 - p)) / p.size


def logistic_loss(weights, X, y, l2: float = 0.0) -> tuple[float, np.ndarray]:
    """Mean BCE of a single-output logistic model plus ``l2/2 * |w|^2``.

    The bias (last entry of ``weights``) is not regularised. Returns the
    loss and its gradient with the same shape as ``weights``.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = X @ w[:-1] + w[-1]
    n = len(y)
    loss = float(np.sum(_softplus(z) - y * z) / n + 0.5 * l2 * np.dot(w[:-1], w[:-1]))
    r = (sigmoid(z) - y) / n
    grad = np.empty_like(w)
    grad[:-1] = X.T @ r + l2 * w[:-1]
    grad[-1] = r.sum()
    return loss, grad


def logistic_fit(X, y, cfg: TrainConfig = TrainConfig(),
                 history: list | None = None) -> LinearModel:
    """Fit a logistic regression by full-batch gradient descent.

    The step is halved whenever it would increase the loss, so the loss
    sequence never goes up. Pass a list as ``history`` to collect the loss
    before each step and after the last one.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, D) with one label per row")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("need samples of both classes")

    w = np.zeros(X.shape[1] + 1)
    loss, grad = logistic_loss(w, X, y, cfg.l2)
    if history is not None:
        history.append(loss)
    lr = cfg.learning_rate
    for _ in range(cfg.steps):
        step = lr
        while True:
            trial = w - step * grad
            new_loss, new_grad = logistic_loss(trial, X, y, cfg.l2)
            if new_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        w, loss, grad = trial, new_loss, new_grad
        if history is not None:
            history.append(loss)
    return LinearModel(w[None])
