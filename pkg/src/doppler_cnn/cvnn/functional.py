"""Stateless forward/backward kernels.

Complex tensors are numpy complex arrays of shape (batch, channels, length).
Gradients are ordinary real calculus on the (real, imag) planes, packed back
into a complex array as ``dL/dRe + 1j * dL/dIm``. With that packing a complex
matmul ``y = W x`` back-propagates as ``dx = W^H g`` and ``dW = g x^H``, which
is why the conv/linear kernels below only differ from their real versions by
``np.conj`` (a no-op on real arrays, so the same kernels serve the baseline).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PAD_MODES = ("zero", "circular")


def conv_padding(kernel: int) -> tuple[int, int]:
    """(left, right) padding keeping the length; (1, 2) for kernel 4."""
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


# ---------------------------------------------------------------- convolution

def _pad(x: np.ndarray, left: int, right: int, mode: str) -> np.ndarray:
    if mode == "circular":
        length = x.shape[2]
        return np.concatenate([x[:, :, length - left:], x, x[:, :, :right]], axis=2)
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, mode: str = "zero"):
    """Stride-1 'same' convolution (cross-correlation), y[o, l] = sum_{c,t} w[o,c,t] x[c, l+t-left]."""
    if mode not in PAD_MODES:
        raise ValueError(f"padding mode must be one of {PAD_MODES}")
    bsz, c, length = x.shape
    o, c_w, k = w.shape
    if c != c_w:
        raise ValueError(f"conv expects {c_w} input channels, got {c}")
    left, right = conv_padding(k)
    if mode == "circular" and length < max(left, right):
        raise ValueError("circular padding needs length >= kernel padding")
    xp = _pad(x, left, right, mode)
    cols = sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3).reshape(bsz * length, c * k)
    y = cols @ w.reshape(o, c * k).T
    y += b
    y = np.ascontiguousarray(y.reshape(bsz, length, o).transpose(0, 2, 1))
    return y, (cols, x.shape, w, mode)


def conv1d_backward(g: np.ndarray, cache, need_dx: bool = True):
    cols, (bsz, c, length), w, mode = cache
    o, _, k = w.shape
    left, right = conv_padding(k)
    g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(bsz * length, o)
    # conj(conj(g)^T cols) == g^T conj(cols) without conjugating the large cols buffer
    dw = np.conj(np.conj(g2).T @ cols).reshape(w.shape)
    db = g2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    # adjoint of the padded correlation: correlate g (padded the other way) with the flipped, conjugated kernel
    gp = _pad(g, right, left, mode)
    gcols = sliding_window_view(gp, k, axis=2).transpose(0, 2, 1, 3).reshape(bsz * length, o * k)
    wf = np.conj(w[:, :, ::-1]).transpose(0, 2, 1).reshape(o * k, c)
    dx = np.ascontiguousarray((gcols @ wf).reshape(bsz, length, c).transpose(0, 2, 1))
    return dx, dw, db


# ------------------------------------------------------------------ activation

def relu_forward(x: np.ndarray):
    """ReLU; on complex input it acts on the real and imaginary planes independently."""
    x = np.ascontiguousarray(x)
    planes = _planes(x)
    mask = planes > 0
    y = np.maximum(planes, 0)  # unlike a masked copy this lets NaN through, so divergence stays visible
    return (y.view(x.dtype) if np.iscomplexobj(x) else y), mask


def relu_backward(g: np.ndarray, mask):
    g = np.ascontiguousarray(g)
    planes = _planes(g)
    dx = np.where(mask, planes, 0).astype(planes.dtype)
    return dx.view(g.dtype) if np.iscomplexobj(g) else dx


def _planes(a: np.ndarray) -> np.ndarray:
    """Real view with re/im interleaved on the last axis (identity for real arrays)."""
    return a.view(a.real.dtype) if np.iscomplexobj(a) else a


# ------------------------------------------------------- adaptive polyphase pool

def aps_norms(x: np.ndarray, stride: int) -> np.ndarray:
    """Squared l2 norm of each polyphase component per sample, shape (batch, stride), float64."""
    mag2 = x.real.astype(np.float64) ** 2 + x.imag.astype(np.float64) ** 2
    return np.stack([mag2[:, :, i::stride].sum(axis=(1, 2)) for i in range(stride)], axis=1)


def aps_forward(x: np.ndarray, stride: int):
    """Keep, per sample, the polyphase component x[:, :, i::stride] of largest l2 norm.

    Returns the pooled tensor (length ceil(L/stride); components shorter than
    that are zero-filled at the end) and the selected offsets. Ties go to the
    lowest offset.
    """
    bsz, c, length = x.shape
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if length < stride:
        raise ValueError("APS needs length >= stride")
    out_len = -(-length // stride)
    offsets = np.argmax(aps_norms(x, stride), axis=1)
    y = np.zeros((bsz, c, out_len), dtype=x.dtype)
    for i in np.unique(offsets):
        sel = offsets == i
        comp = x[sel][:, :, i::stride]
        y[sel, :, : comp.shape[2]] = comp
    return y, (offsets, x.shape, stride)


def aps_backward(g: np.ndarray, cache):
    offsets, shape, stride = cache
    dx = np.zeros(shape, dtype=g.dtype)
    for i in np.unique(offsets):
        sel = np.flatnonzero(offsets == i)
        n_i = len(range(i, shape[2], stride))
        dx[sel[:, None, None], np.arange(shape[1])[None, :, None],
           np.arange(i, shape[2], stride)[None, None, :]] = g[sel][:, :, :n_i]
    return dx


# ---------------------------------------------------------------------- pooling

def gap_forward(x: np.ndarray):
    """Mean over the length axis, accumulated in double precision; (B, C, L) -> (B, C)."""
    y = x.astype(np.complex128 if np.iscomplexobj(x) else np.float64).mean(axis=2)
    return y.astype(x.dtype), x.shape


def gap_backward(g: np.ndarray, shape):
    return np.broadcast_to(g[:, :, None] / shape[2], shape).astype(g.dtype)


def maxpool_forward(x: np.ndarray, kernel: int, stride: int):
    bsz, c, length = x.shape
    win = sliding_window_view(x, kernel, axis=2)[:, :, ::stride]
    arg = win.argmax(axis=3)
    y = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    src = arg + np.arange(win.shape[2]) * stride
    return np.ascontiguousarray(y), (src, x.shape)


def maxpool_backward(g: np.ndarray, cache):
    src, shape = cache
    dx = np.zeros(shape, dtype=g.dtype)
    bsz, c, _ = shape
    bi = np.arange(bsz)[:, None, None]
    ci = np.arange(c)[None, :, None]
    np.add.at(dx, (np.broadcast_to(bi, src.shape), np.broadcast_to(ci, src.shape), src), g)
    return dx


# ------------------------------------------------------------------------ dense

def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"linear expects {w.shape[1]} features, got {x.shape[1]}")
    return x @ w.T + b, (x, w)


def linear_backward(g: np.ndarray, cache):
    x, w = cache
    return g @ np.conj(w), g.T @ np.conj(x), g.sum(axis=0)


def magnitude_forward(z: np.ndarray):
    """Elementwise modulus; the complex class scores become real logits."""
    r = np.abs(z)
    return r, (z, r)


def magnitude_backward(g: np.ndarray, cache):
    z, r = cache
    safe = np.where(r > 0, r, 1)
    return np.where(r > 0, g * z / safe, 0).astype(z.dtype)


# ------------------------------------------------------------ baseline extras

def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool,
                      momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel normalisation over (batch, length); running stats updated in place when training."""
    if train:
        mean = x.mean(axis=(0, 2), dtype=np.float64)
        var = x.var(axis=(0, 2), dtype=np.float64)
        n = x.shape[0] * x.shape[2]
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * n / max(n - 1, 1)
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x - mean[None, :, None]) * inv[None, :, None]).astype(x.dtype)
    y = gamma[None, :, None] * xhat + beta[None, :, None]
    return y.astype(x.dtype), (xhat, inv.astype(x.dtype), gamma, train)


def batchnorm_backward(g, cache):
    xhat, inv, gamma, train = cache
    dgamma = (g * xhat).sum(axis=(0, 2))
    dbeta = g.sum(axis=(0, 2))
    dxhat = g * gamma[None, :, None]
    if not train:
        return dxhat * inv[None, :, None], dgamma, dbeta
    n = g.shape[0] * g.shape[2]
    dx = (inv[None, :, None] / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 2), keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
    )
    return dx.astype(g.dtype), dgamma, dbeta


def dropout_forward(x, rate: float, train: bool, rng: np.random.Generator | None):
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(g, keep):
    return g if keep is None else g * keep
