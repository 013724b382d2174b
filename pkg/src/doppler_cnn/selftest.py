"""Fast oracle checks runnable without a test framework (``doppler-cnn selftest``)."""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from . import cvnn
from .cvnn import functional as F
from .spectral import apply_doppler_time, bin_shift, dft, naive_dft, pad_and_dft, padding_condition


def _crandn(rng, shape, dtype=np.complex128):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(dtype)


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_dft() -> str:
    rng = np.random.default_rng(0)
    worst = 0.0
    for n in (128, 208, 688):
        x = _crandn(rng, (2, n), np.complex64)
        worst = max(worst, _rel(dft(x), naive_dft(x)))
    assert worst < 1e-4, f"DFT vs naive oracle relative error {worst:.2e}"
    return f"max rel err {worst:.1e}"


def check_doppler_bin_shift() -> str:
    rng = np.random.default_rng(1)
    x = _crandn(rng, (3, 128))
    worst = 0.0
    for p, m in ((0, 5), (280, 20), (40, -11)):
        n = 128 + 2 * p
        lhs = pad_and_dft(apply_doppler_time(x, m * 1e6 / n, 1e6, origin=p), p)
        worst = max(worst, _rel(lhs, bin_shift(pad_and_dft(x, p), m)))
    assert worst < 1e-5, f"time-domain Doppler vs bin shift relative error {worst:.2e}"
    return f"max rel err {worst:.1e}"


def _fd_check(layer: cvnn.Layer, x: np.ndarray, h: float = 1e-6) -> float:
    rng = np.random.default_rng(2)
    y = layer.forward(x, train=True)
    r = _crandn(rng, y.shape) if np.iscomplexobj(y) else rng.standard_normal(y.shape)

    def loss(inp):
        return float(np.real(np.sum(np.conj(r) * layer.forward(inp, train=True))))

    layer.zero_grad()
    layer.forward(x, train=True)
    dx = layer.backward(r.astype(y.dtype))
    num = np.zeros(x.shape, dtype=np.complex128 if np.iscomplexobj(x) else np.float64)
    flat, out = x.reshape(-1), num.reshape(-1)
    for i in range(flat.size):
        for d in ((1, 1j) if np.iscomplexobj(x) else (1,)):
            orig = flat[i]
            flat[i] = orig + h * d
            fp = loss(x)
            flat[i] = orig - h * d
            fm = loss(x)
            flat[i] = orig
            out[i] += d * (fp - fm) / (2 * h)
    return _rel(dx, num)


def check_gradients() -> str:
    rng = np.random.default_rng(3)
    cases = {
        "complex conv": (cvnn.ComplexConv1d(2, 3, padding="circular", rng=rng, dtype=np.complex128),
                         _crandn(rng, (2, 2, 6))),
        "complex linear": (cvnn.ComplexLinear(4, 3, rng=rng, dtype=np.complex128), _crandn(rng, (2, 4))),
        "gap": (cvnn.GlobalAvgPool(), _crandn(rng, (2, 3, 5))),
        "aps": (cvnn.APSPool(2), _crandn(rng, (2, 2, 8)) * np.tile([1, 3], 4)),
        "magnitude": (cvnn.Magnitude(), _crandn(rng, (2, 7)) + 0.5),
        "batchnorm": (cvnn.BatchNorm1d(2, dtype=np.float64), rng.standard_normal((3, 2, 4))),
    }
    worst = {name: _fd_check(layer, x) for name, (layer, x) in cases.items()}
    bad = {k: v for k, v in worst.items() if not v < 1e-6}
    assert not bad, f"gradient check failed: {bad}"
    return f"max rel err {max(worst.values()):.1e} over {len(worst)} layers"


def check_equivariance() -> str:
    rng = np.random.default_rng(4)
    x = _crandn(rng, (2, 3, 32), np.complex64)
    w = _crandn(rng, (4, 3, 4), np.complex64)
    b = _crandn(rng, (4,), np.complex64)
    y = F.conv1d_forward(x, w, b, "circular")[0]
    for m in (1, 7, 31):
        ys = F.conv1d_forward(np.roll(x, m, axis=2), w, b, "circular")[0]
        assert np.array_equal(ys, np.roll(y, m, axis=2)), f"circular conv not equivariant for m={m}"
        pa = np.sort(np.abs(F.aps_forward(y, 2)[0]), axis=None)
        pb = np.sort(np.abs(F.aps_forward(ys, 2)[0]), axis=None)
        assert np.array_equal(pa, pb), f"APS multiset changed for m={m}"
    ramp = np.array([[[1, 2, 3, 4, 5, 6]]], np.complex64)
    for shifted in (ramp, np.roll(ramp, 1, axis=2)):
        got = sorted(np.abs(F.aps_forward(shifted, 2)[0]).ravel())
        assert got == [2, 4, 6], f"APS picked {got}"
    return "conv bit-exact, APS multisets stable"


def check_padding_condition() -> str:
    cells = 0
    for p, s in itertools.product(range(0, 301, 10), (2, 3, 4, 5)):
        n = 128 + 2 * p
        brute = all(v % s == 0 for v in (n, math.ceil(n / s), math.ceil(n / s**2)))
        assert padding_condition(p, s) == brute, f"padding condition wrong at p={p}, s={s}"
        cells += 1
    assert padding_condition(280, 2) and not padding_condition(280, 4)
    return f"{cells} grid cells agree"


CHECKS: dict[str, Callable[[], str]] = {
    "dft": check_dft,
    "doppler": check_doppler_bin_shift,
    "gradients": check_gradients,
    "equivariance": check_equivariance,
    "padding": check_padding_condition,
}


def run(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        try:
            echo(f"PASS {name}: {fn()}")
        except AssertionError as exc:
            ok = False
            echo(f"FAIL {name}: {exc}")
    return ok
