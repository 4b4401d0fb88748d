"""Activations, losses, Adam and a central-difference gradient oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

EPS_LOG = 1e-12


class TrainingError(RuntimeError):
    """Non-finite loss or parameters during optimisation."""


def relu(m):
    return np.maximum(m, 0.0)


def sigmoid(m):
    return expit(m)


def softmax_rows(m):
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(m):
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def log_sigmoid(m):
    return log_expit(m)


def _clamp(p):
    return np.clip(p, EPS_LOG, 1.0 - EPS_LOG)


def cross_entropy(pred, onehot) -> float:
    """Mean over rows of -sum(onehot * log pred)."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    onehot = np.atleast_2d(np.asarray(onehot, dtype=np.float64))
    if pred.shape != onehot.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {onehot.shape}")
    return float(-(onehot * np.log(_clamp(pred))).sum(axis=1).mean())


def binary_cross_entropy(p, y) -> float:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape and y.ndim and p.ndim:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    p = _clamp(p)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# ----------------------------------------------------------------- Adam

@dataclass
class AdamState:
    learning_rate: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(self.learning_rate, self.beta1, self.beta2, self.eps, self.step,
                         {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place bias-corrected Adam update of every parameter named in ``grads``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient for {name!r} has shape {np.shape(g)}, "
                             f"parameter has {np.shape(p)}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --------------------------------------------------- finite differences

@dataclass
class GradientCheckReport:
    max_rel_error: float
    per_param: dict
    coordinates_checked: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def finite_difference_check(loss_fn, params: dict, analytic: dict, h: float = 1e-4,
                            max_coords: int | None = 200,
                            rng: np.random.Generator | None = None) -> GradientCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    ``loss_fn`` takes no arguments and reads ``params`` (mutated in place and
    restored). Error per parameter is max|a - fd| / max(max|fd|, 1e-12) over
    the sampled coordinates, so a gradient off by a factor 2 reports ~1.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    per_param = {}
    total = 0
    for name, a in analytic.items():
        p = params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        fd = np.empty(len(idx))
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise TrainingError(f"non-finite loss while probing {name}[{i}]")
            fd[k] = (fp - fm) / (2.0 * h)
        an = np.asarray(a).reshape(-1)[idx]
        scale = max(np.abs(fd).max(initial=0.0), 1e-12)
        per_param[name] = float(np.abs(an - fd).max(initial=0.0) / scale)
        total += len(idx)
    return GradientCheckReport(max(per_param.values(), default=0.0), per_param, total)
