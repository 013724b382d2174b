"""Softmax cross-entropy and Adam."""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean NLL of the softmax over a batch, and its gradient w.r.t. ``logits``.

    Accepts a single logit vector with a scalar label as well as a batch.
    """
    single = logits.ndim == 1
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    grad /= len(labels)
    grad = grad.astype(logits.dtype if np.issubdtype(logits.dtype, np.floating) else np.float64)
    return float(loss), grad[0] if single else grad


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place.

    Complex parameters are updated as their two real planes, each with its own
    moment estimates.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros(_real_view(v).shape, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros(_real_view(v).shape, dtype=np.float64) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for k, p in self.params.items():
            g = _real_view(np.ascontiguousarray(grads[k], dtype=p.dtype)).astype(np.float64)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            pv = _real_view(p)
            pv -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(pv.dtype)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out


def _real_view(a: np.ndarray) -> np.ndarray:
    if not a.flags.c_contiguous:
        raise ValueError("Adam needs contiguous parameter arrays")
    if np.iscomplexobj(a):
        return a.view(a.real.dtype)
    return a
