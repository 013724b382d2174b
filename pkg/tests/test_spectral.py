import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doppler_cnn.spectral import (
    PaddingConfig,
    apply_doppler_time,
    bin_shift,
    dft,
    naive_dft,
    pad_and_dft,
    padding_condition,
)

FS = 1e6


def random_frames(seed, n=4, length=128):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((n, length)) + 1j * rng.standard_normal((n, length))).astype(np.complex64)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("n", [128, 208, 688, 97, 1])
def test_dft_matches_naive_oracle(n):
    x = random_frames(n, 3, n)
    assert rel_err(dft(x), naive_dft(x)) < 1e-4


def test_naive_oracle_on_known_transform():
    # DFT of exp(j 2 pi 3 n / 8) is 8 at bin 3
    n = np.arange(8)
    X = naive_dft(np.exp(2j * np.pi * 3 * n / 8))
    expected = np.zeros(8)
    expected[3] = 8
    np.testing.assert_allclose(X, expected, atol=1e-12)


def test_impulse_gives_flat_spectrum():
    x = np.zeros(128, np.complex64)
    x[0] = 1
    np.testing.assert_array_equal(pad_and_dft(x, 0), np.ones(128, np.complex64))


def test_padded_length():
    assert pad_and_dft(random_frames(0, 2), 280).shape == (2, 688)
    assert PaddingConfig(280, 4).p_star == 688


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 300))
def test_parseval(seed, p):
    x = random_frames(seed, 2)
    X = pad_and_dft(x, p).astype(np.complex128)
    n = 128 + 2 * p
    lhs = np.sum(np.abs(x.astype(np.complex128)) ** 2, axis=-1)
    rhs = np.sum(np.abs(X) ** 2, axis=-1) / n
    np.testing.assert_allclose(lhs, rhs, rtol=1e-5)


def test_linearity():
    x, y = random_frames(1, 2), random_frames(2, 2)
    a, b = 0.3 - 1.2j, 2.0 + 0.5j
    lhs = dft((a * x + b * y).astype(np.complex128))
    rhs = a * dft(x.astype(np.complex128)) + b * dft(y.astype(np.complex128))
    assert rel_err(lhs, rhs) < 1e-5


def test_bin_shift_examples():
    a, b, c, d = 1, 2j, 3, 4j
    spec = np.array([a, b, c, d])
    np.testing.assert_array_equal(bin_shift(spec, 1), [d, a, b, c])
    np.testing.assert_array_equal(bin_shift(spec, 0), spec)
    np.testing.assert_array_equal(bin_shift(spec, 4), spec)
    # definition out[k] = spec[(k - m) mod N]
    for m in range(-5, 9):
        out = bin_shift(spec, m)
        assert all(out[k] == spec[(k - m) % 4] for k in range(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(-700, 700), st.integers(0, 2**31))
def test_bin_shift_composes_and_preserves_energy(m, seed):
    spec = pad_and_dft(random_frames(seed, 1), 10)
    step = spec
    for _ in range(abs(m) % 50):
        step = bin_shift(step, 1 if m >= 0 else -1)
    np.testing.assert_array_equal(step, bin_shift(spec, (abs(m) % 50) * (1 if m >= 0 else -1)))
    np.testing.assert_array_equal(np.sort(np.abs(bin_shift(spec, m))), np.sort(np.abs(spec)))


def test_zero_doppler_is_identity():
    x = random_frames(3)
    np.testing.assert_array_equal(apply_doppler_time(x, 0.0, FS), x)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.49e6, 0.49e6), st.integers(0, 2**31))
def test_doppler_preserves_modulus(f_d, seed):
    x = random_frames(seed, 2)
    y = apply_doppler_time(x, f_d, FS)
    np.testing.assert_allclose(np.abs(y), np.abs(x), rtol=1e-6)


@pytest.mark.parametrize("p,m", [(0, 1), (0, 20), (0, -7), (280, 20), (280, 3), (40, -11)])
def test_integer_bin_doppler_equals_bin_shift(p, m):
    n = 128 + 2 * p
    f_d = m * FS / n
    x = random_frames(abs(m) + p, 3)
    # time origin at the start of the padded frame makes the correspondence exact
    lhs = pad_and_dft(apply_doppler_time(x.astype(np.complex128), f_d, FS, origin=p), p)
    rhs = bin_shift(pad_and_dft(x, p), m)
    assert rel_err(lhs, rhs) < 1e-5


def test_frame_origin_doppler_differs_by_constant_phase():
    p, m = 280, 20
    n = 128 + 2 * p
    x = random_frames(9, 2).astype(np.complex128)
    lhs = pad_and_dft(apply_doppler_time(x, m * FS / n, FS), p).astype(np.complex128)
    rhs = bin_shift(pad_and_dft(x, p), m).astype(np.complex128)
    ratio = lhs / rhs
    np.testing.assert_allclose(ratio, np.exp(-2j * np.pi * m * p / n), rtol=1e-3)


def test_half_bin_doppler_splits_tone_energy():
    n = 128
    t = np.arange(n)
    tone = np.exp(2j * np.pi * 10 * t / n)
    shifted = apply_doppler_time(tone, 0.5 * FS / n, FS)
    energy = np.abs(naive_dft(shifted)) ** 2
    frac = energy / energy.sum()
    top2 = np.sort(frac)[-2:]
    assert np.all(top2 < 0.9)
    assert abs(top2[0] - top2[1]) < 1e-6
    assert set(np.argsort(frac)[-2:]) == {10, 11}


def test_per_frame_doppler_broadcast():
    x = random_frames(4, 3)
    f = np.array([0.0, 100.0, -2500.0])
    y = apply_doppler_time(x, f, FS)
    for i in range(3):
        np.testing.assert_allclose(y[i], apply_doppler_time(x[i], f[i], FS), rtol=1e-6)


def test_doppler_range_check():
    with pytest.raises(ValueError):
        apply_doppler_time(random_frames(0), FS / 2, FS)


# ---------------------------------------------------------- padding condition

def brute_condition(p, s):
    n1 = 128 + 2 * p
    chain = [n1, math.ceil(n1 / s), math.ceil(n1 / s**2)]
    return all(n % s == 0 for n in chain)


@pytest.mark.parametrize("p,s,expected", [(280, 2, True), (260, 3, True), (280, 4, False),
                                          (0, 2, True), (30, 2, False), (0, 3, False)])
def test_padding_condition_examples(p, s, expected):
    assert padding_condition(p, s) is expected


def test_padding_condition_p280_s4_clause_values():
    cfg = PaddingConfig(280, 4)
    assert cfg.chain(2) == (688, 172, 43)
    assert 43 % 4 == 3


def test_padding_condition_table_grid_matches_brute_force():
    grid = list(itertools.product(range(0, 301, 10), (2, 3, 4, 5)))
    assert len(grid) == 124
    for p, s in grid:
        assert padding_condition(p, s) == brute_condition(p, s), (p, s)


@pytest.mark.parametrize("p", range(0, 301, 10))
@pytest.mark.parametrize("s", [2, 3, 4, 5])
def test_condition_implies_divisible_chain(p, s):
    cfg = PaddingConfig(p, s)
    if padding_condition(p, s):
        assert all(n % s == 0 for n in cfg.chain(3)[:3])


def test_chain_uses_ceiling_division():
    assert PaddingConfig(280, 4).chain(3) == (688, 172, 43, 11)
    assert PaddingConfig(0, 2).chain(3) == (128, 64, 32, 16)
    assert PaddingConfig(10, 3).chain(3) == (148, 50, 17, 6)


def test_padding_condition_rejects_bad_args():
    with pytest.raises(ValueError):
        padding_condition(-1, 2)
    with pytest.raises(ValueError):
        padding_condition(0, 1)
