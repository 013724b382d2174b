import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doppler_cnn.rf_synth import (
    CorruptHeaderError,
    Dataset,
    FrameParams,
    GeneratorConfig,
    IntegrityError,
    SignalClass,
    TruncatedPayloadError,
    VersionMismatchError,
    add_awgn,
    build_dataset,
    draw_params,
    gen_frame,
    generate_labeled_frame,
    load_dataset,
    save_dataset,
)
from doppler_cnn.spectral import naive_dft

CFG = GeneratorConfig()
FS = CFG.sample_rate_hz
N = CFG.frame_len
CLEAN = [SignalClass.TONE, SignalClass.HOPPING_TONE, SignalClass.CHIRP, SignalClass.NOISE]


def clean_frame(signal, seed):
    params = draw_params(signal, np.random.default_rng(seed), CFG)
    return gen_frame(signal, params, CFG), params


def inst_freq_hz(x):
    """Phase-difference oracle: per-sample instantaneous frequency of a constant-modulus frame."""
    return np.angle(x[1:] * np.conj(x[:-1])).astype(np.float64) * FS / (2 * np.pi)


def test_class_encoding():
    assert len(SignalClass) == 7
    assert [int(c) for c in SignalClass] == list(range(7))
    assert [c.label for c in SignalClass] == [
        "tone", "hopping_tone", "chirp", "noise", "bpsk", "qpsk", "8psk"]
    assert SignalClass.from_name("8psk") is SignalClass.PSK8


def test_zero_frequency_tone_is_all_ones():
    x = gen_frame(SignalClass.TONE, FrameParams(SignalClass.TONE, phase=0.0, freq_hz=0.0), CFG)
    np.testing.assert_array_equal(x, np.ones(N, dtype=np.complex64))


def test_bpsk_single_symbol_is_all_ones():
    params = FrameParams(SignalClass.BPSK, phase=0.0, freq_hz=0.0, order=2, sps=8,
                         symbols=np.zeros(N // 8 + 1, dtype=int))
    x = gen_frame(SignalClass.BPSK, params, CFG)
    np.testing.assert_allclose(x, np.ones(N), atol=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_chirp_frequency_steps_constant_between_wraps(seed):
    x, params = clean_frame(SignalClass.CHIRP, seed)
    steps = np.diff(inst_freq_hz(x))
    expected = params.chirp_rate_hz_s / FS
    wraps = steps < 0
    span = params.chirp_max_hz - params.chirp_min_hz
    np.testing.assert_allclose(steps[~wraps], expected, rtol=0, atol=2e-3 * span)
    # a wrap drops the frequency by one span (plus the step taken that sample)
    np.testing.assert_allclose(steps[wraps], expected - span, rtol=0, atol=2e-3 * span)
    assert np.all(inst_freq_hz(x) >= params.chirp_min_hz - 1e-3 * span)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([SignalClass.TONE, SignalClass.HOPPING_TONE]), st.integers(0, 2**32 - 1))
def test_constant_modulus(signal, seed):
    x, _ = clean_frame(signal, seed)
    assert np.max(np.abs(np.abs(x) - 1.0)) < 1e-5


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(list(SignalClass)), st.integers(0, 2**32 - 1))
def test_unit_power_and_finite(signal, seed):
    x, _ = clean_frame(signal, seed)
    assert x.dtype == np.complex64 and x.shape == (N,)
    assert np.all(np.isfinite(x))
    assert abs(np.mean(np.abs(x) ** 2) - 1.0) < 1e-5


def _out_of_band_fraction(x, lo, hi, allowance_bins, window=None):
    w = np.ones(N) if window is None else window
    energy = np.abs(naive_dft(x * w)) ** 2
    f = np.fft.fftfreq(N, d=1.0 / FS)
    margin = allowance_bins * FS / N
    outside = (f < lo - margin) | (f > hi + margin)
    return energy[outside].sum() / energy.sum()


@pytest.mark.parametrize("seed", range(25))
def test_noise_confined_to_passband(seed):
    x, p = clean_frame(SignalClass.NOISE, seed)
    assert _out_of_band_fraction(x, p.noise_lo_hz, p.noise_hi_hz, 1) < 0.01


@pytest.mark.parametrize("seed", range(25))
def test_tone_confined_near_its_frequency(seed):
    # off-bin tones leak ~19% outside +/-1 bin with a rectangular window; Blackman's main lobe is +/-3 bins
    x, p = clean_frame(SignalClass.TONE, seed)
    assert _out_of_band_fraction(x, p.freq_hz, p.freq_hz, 3, np.blackman(N)) < 0.01


@pytest.mark.parametrize("signal", [SignalClass.HOPPING_TONE, SignalClass.CHIRP])
@pytest.mark.parametrize("seed", range(15))
def test_swept_signals_stay_in_declared_band(signal, seed):
    x, p = clean_frame(signal, seed)
    if signal is SignalClass.CHIRP:
        lo, hi = p.chirp_min_hz, p.chirp_max_hz
    else:
        lo, hi = min(p.hop_freqs_hz), max(p.hop_freqs_hz)
    f = inst_freq_hz(x)
    tol = 1e-3 * FS
    if signal is SignalClass.HOPPING_TONE:
        # the phase difference across a hop boundary mixes two frequencies only at that sample
        assert np.all((f >= lo - tol) & (f <= hi + tol))
    else:
        assert np.all((f >= lo - tol) & (f <= hi + tol))
    assert max(abs(lo), abs(hi)) <= CFG.band_edge_hz
    # frequency jumps splatter a little energy; the bulk must still sit inside the band
    assert _out_of_band_fraction(x, lo, hi, 5) < 0.1


@pytest.mark.parametrize("signal", [SignalClass.BPSK, SignalClass.QPSK, SignalClass.PSK8])
@pytest.mark.parametrize("seed", range(10))
def test_psk_constellation_clusters(signal, seed):
    x, p = clean_frame(signal, seed)
    t = np.arange(N)
    derot = x * np.exp(-1j * (2 * np.pi * p.freq_hz * t / FS + p.phase))
    phases = np.mod(np.angle(derot), 2 * np.pi)
    grid = 2 * np.pi / p.order
    nearest = np.round(phases / grid)
    spread = np.abs(phases - nearest * grid)
    assert spread.max() < 1e-3
    assert set(np.mod(nearest.astype(int), p.order)) <= set(range(p.order))
    assert abs(p.freq_hz) + FS / p.sps <= CFG.band_edge_hz


def test_psk_order_matches_class():
    for signal, order in [(SignalClass.BPSK, 2), (SignalClass.QPSK, 4), (SignalClass.PSK8, 8)]:
        _, p = clean_frame(signal, 3)
        assert p.order == order and p.sps >= 2


def test_hops_change_frequency():
    for seed in range(20):
        _, p = clean_frame(SignalClass.HOPPING_TONE, seed)
        assert len(p.hop_freqs_hz) >= 2
        assert np.all(np.abs(np.diff(p.hop_freqs_hz)) >= CFG.hop_min_separation * FS)


@pytest.mark.parametrize("field,value", [("freq_hz", 0.45e6), ("freq_hz", -0.41e6)])
def test_out_of_band_tone_rejected(field, value):
    params = FrameParams(SignalClass.TONE, **{field: value})
    with pytest.raises(ValueError, match="outside the usable band"):
        gen_frame(SignalClass.TONE, params, CFG)


def test_psk_lobe_outside_band_rejected():
    params = FrameParams(SignalClass.QPSK, freq_hz=0.2e6, order=4, sps=4, symbols=np.zeros(40, int))
    with pytest.raises(ValueError, match="main lobe"):
        gen_frame(SignalClass.QPSK, params, CFG)


def test_class_param_mismatch_rejected():
    _, p = clean_frame(SignalClass.TONE, 0)
    with pytest.raises(ValueError):
        gen_frame(SignalClass.CHIRP, p, CFG)


@pytest.mark.parametrize("kwargs", [dict(frame_len=4), dict(snr_grid_db=()), dict(nyquist_margin=0.0),
                                    dict(nyquist_margin=0.6), dict(frames_per_class_snr=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GeneratorConfig(**kwargs)


# ----------------------------------------------------------------------- AWGN

@pytest.mark.parametrize("snr,var", [(0, 1.0), (20, 0.01), (-10, 10.0)])
def test_awgn_variance(snr, var):
    rng = np.random.default_rng(0)
    noise = add_awgn(np.zeros(200_000, np.complex64), snr, rng)
    assert abs(np.mean(np.abs(noise) ** 2) / var - 1) < 0.02


def test_awgn_deterministic_given_stream():
    x = np.ones(N, np.complex64)
    a = add_awgn(x, 5, np.random.default_rng(42))
    b = add_awgn(x, 5, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("snr", CFG.snr_grid_db)
def test_snr_calibration_over_ensemble(snr):
    rng = np.random.default_rng(snr + 100)
    sig_p = noise_p = 0.0
    for i in range(1000):
        clean, _ = clean_frame(SignalClass(i % 7), 10_000 + i)
        noisy = add_awgn(clean, snr, rng)
        sig_p += np.sum(np.abs(clean) ** 2)
        noise_p += np.sum(np.abs(noisy - clean) ** 2)
    measured = 10 * np.log10(sig_p / noise_p)
    assert abs(measured - snr) < 0.5


# -------------------------------------------------------------------- dataset

def small_config(**kw):
    return GeneratorConfig(**{"frames_per_class_snr": 3, "snr_grid_db": (-4, 10), "master_seed": 5, **kw})


def test_dataset_counts():
    ds = build_dataset(small_config())
    assert len(ds) == 7 * 2 * 3
    assert ds.iq.shape == (42, N)
    assert np.bincount(ds.labels).tolist() == [6] * 7
    one = build_dataset(GeneratorConfig(frames_per_class_snr=1, snr_grid_db=(0,)))
    assert len(one) == 7


def test_full_scale_count_arithmetic():
    cfg = GeneratorConfig()
    assert len(cfg.snr_grid_db) == 21
    assert len(SignalClass) * len(cfg.snr_grid_db) * cfg.frames_per_class_snr == 294_000


def test_frame_count_overflow():
    with pytest.raises(OverflowError):
        build_dataset(GeneratorConfig(frames_per_class_snr=2**31, snr_grid_db=(0,)))


def test_frames_reproducible_in_isolation():
    cfg = small_config()
    ds = build_dataset(cfg)
    k = 2 * 3 * 2 + 3 + 1   # class 2, second SNR, index 1
    x, _ = generate_labeled_frame(cfg, SignalClass.CHIRP, 10, 1)
    np.testing.assert_array_equal(ds.iq[k], x)
    assert ds.labels[k] == SignalClass.CHIRP and ds.snr_db[k] == 10


def test_build_is_deterministic(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_dataset(build_dataset(small_config()), a)
    save_dataset(build_dataset(small_config()), b)
    assert a.read_bytes() == b.read_bytes()
    save_dataset(build_dataset(small_config(master_seed=6)), b)
    assert a.read_bytes() != b.read_bytes()


def test_round_trip(tmp_path):
    ds = build_dataset(small_config())
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back == ds
    assert back.iq.tobytes() == ds.iq.tobytes()


def test_file_layout(tmp_path):
    ds = build_dataset(small_config())
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    raw = path.read_bytes()
    assert raw[:8] == b"DOPCNNDS"
    version, mlen = struct.unpack_from("<HI", raw, 8)
    assert version == 1
    payload = raw[14 + mlen:]
    assert len(payload) == len(ds) * (N * 8 + 3)
    first = np.frombuffer(payload[: N * 8], dtype="<f4")
    np.testing.assert_array_equal(first[0::2], ds.iq[0].real)
    np.testing.assert_array_equal(first[1::2], ds.iq[0].imag)
    assert payload[N * 8] == ds.labels[0]
    assert struct.unpack_from("<h", payload, N * 8 + 1)[0] == ds.snr_db[0]


def test_truncated_file(tmp_path):
    path = tmp_path / "ds.bin"
    save_dataset(build_dataset(small_config()), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(TruncatedPayloadError, match="truncated payload"):
        load_dataset(path)


def test_count_mismatch(tmp_path):
    ds = build_dataset(small_config())
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    rec = N * 8 + 3
    path.write_bytes(path.read_bytes()[:-rec])
    with pytest.raises(IntegrityError):
        load_dataset(path)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "ds.bin"
    save_dataset(build_dataset(small_config()), path)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXXXXXX" + bytes(raw[8:]))
    with pytest.raises(CorruptHeaderError):
        load_dataset(bad)
    raw[8:10] = struct.pack("<H", 99)
    bad.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_dataset(bad)


def test_dataset_subset_and_eq():
    ds = build_dataset(small_config())
    sub = ds.subset(np.arange(5))
    assert len(sub) == 5
    assert sub != ds
    assert Dataset(ds.iq, ds.labels, ds.snr_db, ds.manifest) == ds
