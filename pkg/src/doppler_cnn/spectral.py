"""Zero padding, DFT and Doppler operators on IQ frames.

Spectra keep the natural DFT bin order 0..N-1 (no fftshift), so a Doppler
shift of an integer number of bins is exactly ``np.roll`` along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_LEN = 128


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class PaddingConfig:
    p: int
    s: int
    frame_len: int = FRAME_LEN

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError("padding must be non-negative")
        if self.s < 1:
            raise ValueError("stride must be positive")

    @property
    def p_star(self) -> int:
        return self.frame_len + 2 * self.p

    def chain(self, depth: int = 3) -> tuple[int, ...]:
        """Lengths entering each APS layer, followed by the final pooled length."""
        return tuple(ceil_div(self.p_star, self.s**i) for i in range(depth + 1))

    @property
    def condition_ok(self) -> bool:
        return padding_condition(self.p, self.s, self.frame_len)


def padding_condition(p: int, s: int, frame_len: int = FRAME_LEN) -> bool:
    """True when every APS input length (p*, ceil(p*/s), ceil(p*/s^2)) is a multiple of s."""
    if p < 0 or s < 2:
        raise ValueError("need p >= 0 and s >= 2")
    n = frame_len + 2 * p
    return n % s == 0 and ceil_div(n, s) % s == 0 and ceil_div(n, s * s) % s == 0


def dft(x: np.ndarray) -> np.ndarray:
    """Unnormalised DFT along the last axis, any length (pocketfft handles non-powers of two)."""
    return np.fft.fft(x, axis=-1)


def naive_dft(x: np.ndarray) -> np.ndarray:
    """O(N^2) reference DFT in float64, used only to validate :func:`dft`."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    # reduce the exponent modulo n before scaling to keep the twiddles accurate
    w = np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)
    return x @ w.T


def pad_frames(frames: np.ndarray, p: int) -> np.ndarray:
    if p < 0:
        raise ValueError("padding must be non-negative")
    widths = [(0, 0)] * (frames.ndim - 1) + [(p, p)]
    return np.pad(frames, widths)


def pad_and_dft(frames: np.ndarray, p: int) -> np.ndarray:
    """Zero-pad ``p`` samples on both sides in time, then take the length-(L+2p) DFT.

    Works on a single frame or on a batch (last axis is time). Returns complex64.
    """
    return dft(pad_frames(np.asarray(frames), p)).astype(np.complex64)


def bin_spacing_hz(sample_rate_hz: float, n_bins: int) -> float:
    return sample_rate_hz / n_bins


def bin_shift(spec: np.ndarray, m: int) -> np.ndarray:
    """Circular shift by ``m`` bins: out[k] = spec[(k - m) mod N]."""
    return np.roll(spec, int(m), axis=-1)


def apply_doppler_time(frames: np.ndarray, f_d, sample_rate_hz: float, origin: int = 0) -> np.ndarray:
    """Multiply by exp(j 2 pi f_d n / f_s), n counted from ``origin``.

    ``f_d`` may be a scalar or one value per frame (broadcast against the
    leading axes). ``origin`` places the frame on a longer time axis: with
    ``origin=p`` the result lines up with the zero-padded frame, and an
    integer-bin shift of the padded spectrum is reproduced exactly rather
    than up to a constant phase.
    """
    frames = np.asarray(frames)
    f_d = np.asarray(f_d, dtype=np.float64)
    if np.any(np.abs(f_d) >= sample_rate_hz / 2):
        raise ValueError("|f_d| must be below f_s/2")
    n = np.arange(frames.shape[-1], dtype=np.float64) + origin
    phase = 2 * np.pi * f_d[..., None] * n / sample_rate_hz
    out = frames * np.exp(1j * phase)
    return out.astype(frames.dtype if np.iscomplexobj(frames) else np.complex64)
