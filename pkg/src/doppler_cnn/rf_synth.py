"""Synthetic seven-class RF interference dataset.

Every frame is a complex baseband burst of ``frame_len`` samples produced by an
unsynchronised receiver: random carrier phase, random frequency offset and a
random time offset for hop/symbol/sweep boundaries. Frames are normalised to
unit mean power before AWGN is added at the requested SNR.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SignalClass",
    "GeneratorConfig",
    "FrameParams",
    "Dataset",
    "draw_params",
    "gen_frame",
    "add_awgn",
    "frame_rng",
    "generate_labeled_frame",
    "build_dataset",
    "save_dataset",
    "load_dataset",
    "DatasetFormatError",
    "CorruptHeaderError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "IntegrityError",
]


class SignalClass(enum.IntEnum):
    TONE = 0
    HOPPING_TONE = 1
    CHIRP = 2
    NOISE = 3
    BPSK = 4
    QPSK = 5
    PSK8 = 6

    @property
    def label(self) -> str:
        return _CLASS_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "SignalClass":
        for c in cls:
            if c.label == name or c.name.lower() == name.lower():
                return c
        raise ValueError(f"unknown signal class {name!r}")


_CLASS_NAMES = {
    SignalClass.TONE: "tone",
    SignalClass.HOPPING_TONE: "hopping_tone",
    SignalClass.CHIRP: "chirp",
    SignalClass.NOISE: "noise",
    SignalClass.BPSK: "bpsk",
    SignalClass.QPSK: "qpsk",
    SignalClass.PSK8: "8psk",
}

PSK_ORDER = {SignalClass.BPSK: 2, SignalClass.QPSK: 4, SignalClass.PSK8: 8}
NUM_CLASSES = len(SignalClass)


@dataclass(frozen=True)
class GeneratorConfig:
    """Dataset generator settings.

    Frequencies given as fractions are relative to ``sample_rate_hz``.
    """

    sample_rate_hz: float = 1e6
    frames_per_class_snr: int = 2000
    frame_len: int = 128
    snr_grid_db: tuple[int, ...] = tuple(range(-20, 21, 2))
    nyquist_margin: float = 0.1
    master_seed: int = 0
    hop_len_range: tuple[int, int] = (16, 64)
    hop_min_separation: float = 0.05
    chirp_min_span: float = 0.1
    chirp_sweeps_range: tuple[float, float] = (0.5, 3.0)
    noise_bw_range: tuple[float, float] = (0.05, 0.4)
    psk_sps_range: tuple[int, int] = (4, 16)
    psk_max_offset: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "snr_grid_db", tuple(int(s) for s in self.snr_grid_db))
        for name in ("hop_len_range", "chirp_sweeps_range", "noise_bw_range", "psk_sps_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    @property
    def band_edge_hz(self) -> float:
        """Largest |frequency| any generated content may occupy."""
        return (0.5 - self.nyquist_margin) * self.sample_rate_hz

    def validate(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.frames_per_class_snr < 1:
            raise ValueError("frames_per_class_snr must be >= 1")
        if self.frame_len < 8:
            raise ValueError("frame_len must be >= 8")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must be non-empty")
        if not 0.0 < self.nyquist_margin <= 0.5:
            raise ValueError("nyquist_margin must lie in (0, 0.5]")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        lo, hi = self.hop_len_range
        if not 1 <= lo <= hi:
            raise ValueError("hop_len_range must satisfy 1 <= lo <= hi")
        lo, hi = self.psk_sps_range
        if not 2 <= lo <= hi:
            raise ValueError("psk_sps_range must satisfy 2 <= lo <= hi")
        half = 0.5 - self.nyquist_margin
        if self.psk_max_offset < 0 or self.psk_max_offset + 1.0 / lo > half:
            raise ValueError("PSK main lobe at the shortest symbol duration exceeds the usable band")
        if not 0 < self.noise_bw_range[0] <= self.noise_bw_range[1] <= 2 * half:
            raise ValueError("noise_bw_range must fit inside the usable band")
        if not 0 < self.chirp_min_span <= 2 * half:
            raise ValueError("chirp_min_span must fit inside the usable band")
        if not 0 < self.chirp_sweeps_range[0] <= self.chirp_sweeps_range[1]:
            raise ValueError("chirp_sweeps_range must be positive and ordered")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class FrameParams:
    """Random draws that fully determine one clean frame.

    Only the fields relevant to ``signal`` are populated.
    """

    signal: SignalClass
    phase: float = 0.0
    freq_hz: float = 0.0  # tone frequency, or PSK carrier offset
    time_offset: int = 0
    hop_len: Optional[int] = None
    hop_freqs_hz: Optional[tuple[float, ...]] = None
    chirp_min_hz: Optional[float] = None
    chirp_max_hz: Optional[float] = None
    chirp_rate_hz_s: Optional[float] = None
    noise_lo_hz: Optional[float] = None
    noise_hi_hz: Optional[float] = None
    noise_seed: Optional[int] = None
    order: Optional[int] = None
    sps: Optional[int] = None
    symbols: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        out = {"signal": self.signal.label}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("signal", "symbols") or v is None:
                continue
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _n_segments(n: int, seg_len: int, offset: int) -> int:
    return (n - 1 + offset) // seg_len + 1


def draw_params(signal: SignalClass, rng: np.random.Generator, config: GeneratorConfig) -> FrameParams:
    """Draw random, valid parameters for one frame of ``signal``."""
    signal = SignalClass(signal)
    fs = config.sample_rate_hz
    n = config.frame_len
    edge = config.band_edge_hz
    phase = float(rng.uniform(0.0, 2 * np.pi))

    if signal is SignalClass.TONE:
        return FrameParams(signal, phase=phase, freq_hz=float(rng.uniform(-edge, edge)))

    if signal is SignalClass.HOPPING_TONE:
        lo, hi = config.hop_len_range
        hop_len = int(rng.integers(lo, hi + 1))
        offset = int(rng.integers(0, hop_len))
        sep = config.hop_min_separation * fs
        freqs = [float(rng.uniform(-edge, edge))]
        for _ in range(_n_segments(n, hop_len, offset) - 1):
            # rejection keeps consecutive hops distinguishable
            while True:
                f = float(rng.uniform(-edge, edge))
                if abs(f - freqs[-1]) >= sep:
                    break
            freqs.append(f)
        return FrameParams(signal, phase=phase, time_offset=offset, hop_len=hop_len,
                           hop_freqs_hz=tuple(freqs))

    if signal is SignalClass.CHIRP:
        span = float(rng.uniform(config.chirp_min_span * fs, 2 * edge))
        f_min = float(rng.uniform(-edge, edge - span))
        sweeps = float(rng.uniform(*config.chirp_sweeps_range))
        rate = sweeps * span * fs / n
        period = span * fs / rate
        offset = int(rng.integers(0, max(1, int(np.ceil(period)))))
        return FrameParams(signal, phase=phase, time_offset=offset, chirp_min_hz=f_min,
                           chirp_max_hz=f_min + span, chirp_rate_hz_s=rate)

    if signal is SignalClass.NOISE:
        bw = float(rng.uniform(*config.noise_bw_range)) * fs
        bw = max(bw, 2 * fs / n)
        lo = float(rng.uniform(-edge, edge - bw))
        return FrameParams(signal, phase=phase, noise_lo_hz=lo, noise_hi_hz=lo + bw,
                           noise_seed=int(rng.integers(0, 2**63)))

    order = PSK_ORDER[signal]
    lo, hi = config.psk_sps_range
    sps = int(rng.integers(lo, hi + 1))
    offset = int(rng.integers(0, sps))
    max_cfo = min(config.psk_max_offset * fs, edge - fs / sps)
    cfo = float(rng.uniform(-max_cfo, max_cfo))
    symbols = rng.integers(0, order, size=_n_segments(n, sps, offset))
    return FrameParams(signal, phase=phase, freq_hz=cfo, time_offset=offset, order=order,
                       sps=sps, symbols=symbols)


def _check_band(name: str, f: float, edge: float) -> None:
    if not -edge <= f <= edge:
        raise ValueError(f"{name}={f:.6g} Hz lies outside the usable band +/-{edge:.6g} Hz")


def _accumulate_phase(inst_freq_hz: np.ndarray, fs: float, phase: float) -> np.ndarray:
    steps = 2 * np.pi * inst_freq_hz / fs
    return phase + np.concatenate(([0.0], np.cumsum(steps[:-1])))


def gen_frame(signal: SignalClass, params: FrameParams, config: GeneratorConfig) -> np.ndarray:
    """Render the clean (pre-noise) frame as ``complex64`` with unit mean power.

    Raises ``ValueError`` when any frequency content would leave the usable band.
    """
    signal = SignalClass(signal)
    if params.signal is not signal:
        raise ValueError(f"parameters drawn for {params.signal.label}, not {signal.label}")
    fs = config.sample_rate_hz
    n = config.frame_len
    edge = config.band_edge_hz
    t = np.arange(n, dtype=np.float64)

    if signal is SignalClass.TONE:
        _check_band("freq_hz", params.freq_hz, edge)
        x = np.exp(1j * (2 * np.pi * params.freq_hz * t / fs + params.phase))

    elif signal is SignalClass.HOPPING_TONE:
        if params.hop_len is None or params.hop_len < 1:
            raise ValueError("hop_len must be >= 1")
        seg = (t.astype(np.int64) + params.time_offset) // params.hop_len
        freqs = np.asarray(params.hop_freqs_hz, dtype=np.float64)
        if len(freqs) < seg[-1] + 1:
            raise ValueError("not enough hop frequencies for the frame")
        for f in freqs:
            _check_band("hop frequency", float(f), edge)
        x = np.exp(1j * _accumulate_phase(freqs[seg], fs, params.phase))

    elif signal is SignalClass.CHIRP:
        f_min, f_max, rate = params.chirp_min_hz, params.chirp_max_hz, params.chirp_rate_hz_s
        _check_band("chirp_min_hz", f_min, edge)
        _check_band("chirp_max_hz", f_max, edge)
        if not f_max > f_min or rate <= 0:
            raise ValueError("chirp needs f_max > f_min and a positive sweep rate")
        swept = rate * (t + params.time_offset) / fs
        inst = f_min + np.mod(swept, f_max - f_min)
        x = np.exp(1j * _accumulate_phase(inst, fs, params.phase))

    elif signal is SignalClass.NOISE:
        lo, hi = params.noise_lo_hz, params.noise_hi_hz
        _check_band("noise_lo_hz", lo, edge)
        _check_band("noise_hi_hz", hi, edge)
        freqs = np.fft.fftfreq(n, d=1.0 / fs)
        mask = (freqs >= lo) & (freqs <= hi)
        if not mask.any():
            raise ValueError("noise passband contains no DFT bin")
        g = np.random.default_rng(params.noise_seed)
        white = g.standard_normal(n) + 1j * g.standard_normal(n)
        x = np.fft.ifft(np.fft.fft(white) * mask) * np.exp(1j * params.phase)

    else:
        order, sps = params.order, params.sps
        if order != PSK_ORDER[signal]:
            raise ValueError(f"{signal.label} requires M={PSK_ORDER[signal]}, got {order}")
        if sps is None or sps < 2:
            raise ValueError("symbol duration must be >= 2 samples")
        if abs(params.freq_hz) + fs / sps > edge:
            raise ValueError("PSK main lobe extends beyond the usable band")
        idx = (t.astype(np.int64) + params.time_offset) // sps
        symbols = np.asarray(params.symbols)
        if len(symbols) < idx[-1] + 1:
            raise ValueError("not enough symbols for the frame")
        points = np.exp(2j * np.pi * symbols[idx] / order)
        x = points * np.exp(1j * (2 * np.pi * params.freq_hz * t / fs + params.phase))

    x = x / np.sqrt(np.mean(np.abs(x) ** 2))
    return x.astype(np.complex64)


def add_awgn(frame: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise of per-sample variance ``10**(-snr_db/10)``."""
    var = 10.0 ** (-snr_db / 10.0)
    scale = np.sqrt(var / 2.0)
    noise = scale * (rng.standard_normal(frame.shape) + 1j * rng.standard_normal(frame.shape))
    return (frame + noise).astype(np.complex64)


def frame_rng(master_seed: int, signal: int, snr_db: int, index: int) -> np.random.Generator:
    """Independent stream for one frame, keyed on (class, snr, index) rather than order."""
    key = (int(signal), int(snr_db) + 2**15, int(index))
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def generate_labeled_frame(config: GeneratorConfig, signal: SignalClass, snr_db: int,
                           index: int) -> tuple[np.ndarray, FrameParams]:
    """Reproduce one dataset frame in isolation."""
    rng = frame_rng(config.master_seed, signal, snr_db, index)
    params = draw_params(signal, rng, config)
    clean = gen_frame(signal, params, config)
    return add_awgn(clean, snr_db, rng), params


FORMAT_VERSION = 1
MAGIC = b"DOPCNNDS"
MAX_FRAMES = 2**31 - 1


@dataclass
class Dataset:
    iq: np.ndarray          # (n, frame_len) complex64
    labels: np.ndarray      # (n,) uint8
    snr_db: np.ndarray      # (n,) int16
    manifest: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.iq = np.ascontiguousarray(self.iq, dtype=np.complex64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        self.snr_db = np.ascontiguousarray(self.snr_db, dtype=np.int16)
        if not (len(self.iq) == len(self.labels) == len(self.snr_db)):
            raise ValueError("iq, labels and snr_db must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.manifest == other.manifest
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.snr_db, other.snr_db)
                and self.iq.shape == other.iq.shape
                and self.iq.tobytes() == other.iq.tobytes())

    def subset(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index)
        manifest = dict(self.manifest, n_frames=int(len(index)), subset=True)
        return Dataset(self.iq[index], self.labels[index], self.snr_db[index], manifest)


def build_dataset(config: GeneratorConfig, classes: Optional[Sequence[SignalClass]] = None) -> Dataset:
    """Generate the full class x SNR x frame cross product."""
    classes = list(SignalClass) if classes is None else [SignalClass(c) for c in classes]
    total = len(classes) * len(config.snr_grid_db) * config.frames_per_class_snr
    if total > MAX_FRAMES:
        raise OverflowError(f"frame count {total} exceeds {MAX_FRAMES}")
    iq = np.empty((total, config.frame_len), dtype=np.complex64)
    labels = np.empty(total, dtype=np.uint8)
    snrs = np.empty(total, dtype=np.int16)
    k = 0
    for c in classes:
        for snr in config.snr_grid_db:
            for i in range(config.frames_per_class_snr):
                iq[k], _ = generate_labeled_frame(config, c, snr, i)
                labels[k] = int(c)
                snrs[k] = snr
                k += 1
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_frames": total,
        "frame_len": config.frame_len,
        "classes": [c.label for c in classes],
        "config": config.to_dict(),
    }
    return Dataset(iq, labels, snrs, manifest)


class DatasetFormatError(ValueError):
    """Base class for unreadable dataset files."""


class CorruptHeaderError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class IntegrityError(DatasetFormatError):
    pass


def _record_dtype(frame_len: int) -> np.dtype:
    return np.dtype([("iq", "<f4", (frame_len, 2)), ("label", "u1"), ("snr", "<i2")])


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write ``ds``: magic, u16 version, u32 manifest length, JSON manifest, packed records."""
    frame_len = ds.iq.shape[1]
    manifest = dict(ds.manifest, format_version=FORMAT_VERSION, n_frames=len(ds), frame_len=frame_len)
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    rec = np.empty(len(ds), dtype=_record_dtype(frame_len))
    rec["iq"] = ds.iq.view(np.float32).reshape(len(ds), frame_len, 2)
    rec["label"] = ds.labels
    rec["snr"] = ds.snr_db
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(rec.tobytes())


def load_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    head = len(MAGIC) + 6
    if len(raw) < head or raw[: len(MAGIC)] != MAGIC:
        raise CorruptHeaderError(f"{path}: bad magic, not a dataset file")
    version, mlen = struct.unpack_from("<HI", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(raw) < head + mlen:
        raise TruncatedPayloadError(f"{path}: truncated payload (manifest cut short)")
    try:
        manifest = json.loads(raw[head: head + mlen].decode("utf-8"))
        n_frames = int(manifest["n_frames"])
        frame_len = int(manifest["frame_len"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: unreadable manifest ({exc})") from exc
    dtype = _record_dtype(frame_len)
    payload = raw[head + mlen:]
    if len(payload) % dtype.itemsize:
        raise TruncatedPayloadError(
            f"{path}: truncated payload ({len(payload)} bytes is not a whole number of records)")
    found = len(payload) // dtype.itemsize
    if found != n_frames:
        raise IntegrityError(f"{path}: manifest declares {n_frames} frames, payload holds {found}")
    rec = np.frombuffer(payload, dtype=dtype)
    if n_frames and rec["label"].max() >= NUM_CLASSES:
        raise IntegrityError(f"{path}: label out of range")
    iq = np.ascontiguousarray(rec["iq"]).view(np.complex64).reshape(n_frames, frame_len)
    return Dataset(iq, rec["label"].copy(), rec["snr"].copy(), manifest)
