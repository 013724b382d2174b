"""Training loop, evaluation and the Doppler experiments.

Three protocols are provided:

* pure shift: the padded spectrum of every test frame is rolled by an integer
  number of bins before it enters the invariant network;
* random Doppler: every test frame is multiplied in time by exp(j 2 pi f_d n/f_s)
  with a per-frame random f_d, before either network's preprocessing;
* sweep: one invariant model per (padding, stride) cell, scored with the
  random-Doppler protocol.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .cvnn import Adam, softmax_cross_entropy
from .models import InvariantModel, InvariantModelConfig, Model, init_invariant
from .rf_synth import NUM_CLASSES, Dataset, GeneratorConfig, SignalClass
from .spectral import apply_doppler_time, bin_shift, padding_condition

log = logging.getLogger(__name__)

CLASS_NAMES = [c.label for c in SignalClass]

DESK_SCALE = dict(frames_per_class_snr=200, snr_grid_db=(-10, 0, 10, 20))


def desk_scale_config(**overrides) -> GeneratorConfig:
    """Reduced dataset used for CPU-sized replication runs."""
    return GeneratorConfig(**{**DESK_SCALE, **overrides})


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    split: float = 0.8
    max_batches_per_epoch: Optional[int] = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class TrainingDiverged(FloatingPointError):
    pass


# ---------------------------------------------------------------------- split

def split_dataset(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified (class, SNR) train/test split; deterministic in ``seed``."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    cfg = ds.manifest.get("config", {})
    classes = [SignalClass.from_name(n) for n in ds.manifest.get("classes", [])] or \
        sorted({SignalClass(int(c)) for c in ds.labels})
    snrs = cfg.get("snr_grid_db") or sorted({int(s) for s in ds.snr_db})
    train_idx, test_idx = [], []
    for c in classes:
        for snr in snrs:
            idx = np.flatnonzero((ds.labels == int(c)) & (ds.snr_db == snr))
            n_train = int(round(fraction * len(idx)))
            if n_train == 0 or n_train == len(idx):
                raise ValueError(f"stratum ({c.label}, {snr} dB) has {len(idx)} frames; "
                                 "cannot give both splits a frame")
            perm = rng.permutation(idx)
            train_idx.append(perm[:n_train])
            test_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


# ------------------------------------------------------------------- training

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    seconds: float
    steps: int


def train(model: Model, train_set: Dataset, cfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> list[EpochRecord]:
    """Minibatch Adam on softmax cross-entropy. Mutates ``model`` in place."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    x_all = model.preprocess(train_set.iq)
    y_all = train_set.labels.astype(np.int64)
    opt = Adam(model.params(), lr=cfg.lr)
    history = []
    n = len(y_all)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        if cfg.max_batches_per_epoch is not None:
            batches = batches[: cfg.max_batches_per_epoch]
        losses = []
        for idx in batches:
            model.zero_grad()
            logits = model.forward_features(x_all[idx], train=True)
            loss, g = softmax_cross_entropy(logits, y_all[idx])
            if not np.isfinite(loss):
                finite = np.abs(logits[np.isfinite(logits)])
                peak = f"{finite.max():.3g}" if finite.size else "n/a"
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, step {len(losses) + 1}; "
                                       f"largest finite |logit| = {peak}")
            model.backward(g)
            opt.step(model.grads())
            losses.append(loss)
        rec = EpochRecord(epoch + 1, float(np.mean(losses)) if losses else float("nan"),
                          time.perf_counter() - t0, len(losses))
        history.append(rec)
        log.info("epoch %d loss %.4f (%.1fs)", rec.epoch, rec.loss, rec.seconds)
        if on_epoch:
            on_epoch(rec)
    return history


# ----------------------------------------------------------------- evaluation

@dataclass
class Accuracy:
    per_class: dict[str, float]
    confusion: np.ndarray  # rows: true class, cols: predicted class

    @property
    def overall(self) -> float:
        return float(np.trace(self.confusion) / max(self.confusion.sum(), 1))


def accuracy_from_predictions(labels: np.ndarray, preds: np.ndarray) -> Accuracy:
    conf = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(conf, (labels.astype(np.int64), preds.astype(np.int64)), 1)
    per_class = {}
    for c in SignalClass:
        total = conf[c].sum()
        if total:
            per_class[c.label] = float(conf[c, c] / total)
    return Accuracy(per_class, conf)


def evaluate(model, test_set: Dataset) -> Accuracy:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    return accuracy_from_predictions(test_set.labels, model.predict(test_set.iq))


@dataclass
class EvalReport:
    before: dict[str, float]
    after: dict[str, float]
    confusion_before: np.ndarray
    confusion_after: np.ndarray
    metadata: dict = field(default_factory=dict)
    changed_predictions: int = 0
    per_snr: dict = field(default_factory=dict)

    @property
    def abs_delta(self) -> dict[str, float]:
        return {k: abs(self.after[k] - self.before[k]) for k in self.before}

    @property
    def total_abs_delta(self) -> float:
        return float(sum(self.abs_delta.values()))

    def rows(self) -> list[tuple[str, float, float, float]]:
        d = self.abs_delta
        return [(k, self.before[k], self.after[k], d[k]) for k in self.before]


def compare_predictions(labels: np.ndarray, before: np.ndarray, after: np.ndarray,
                        snr_db: np.ndarray | None = None, metadata: dict | None = None) -> EvalReport:
    a = accuracy_from_predictions(labels, before)
    b = accuracy_from_predictions(labels, after)
    per_snr = {}
    if snr_db is not None:
        for snr in np.unique(snr_db):
            sel = snr_db == snr
            per_snr[int(snr)] = {
                "before": accuracy_from_predictions(labels[sel], before[sel]).per_class,
                "after": accuracy_from_predictions(labels[sel], after[sel]).per_class,
            }
    return EvalReport(a.per_class, b.per_class, a.confusion, b.confusion, dict(metadata or {}),
                      int(np.count_nonzero(before != after)), per_snr)


def _batched(fn, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    return np.concatenate([fn(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def run_pure_shift_experiment(model: InvariantModel, test_set: Dataset, m: int,
                              batch_size: int = 512) -> EvalReport:
    """Accuracy before/after rolling each padded test spectrum by ``m`` bins."""
    spec = model.preprocess(test_set.iq)[:, 0, :]
    before = _batched(lambda s: model.forward_spectrum(s), spec, batch_size).argmax(axis=1)
    after = _batched(lambda s: model.forward_spectrum(bin_shift(s, m)), spec, batch_size).argmax(axis=1)
    meta = {"experiment": "pure_shift", "shift_bins": int(m), "model": model.config_dict(),
            "padding_condition": padding_condition(model.config.p, model.config.s)
            if model.config.s >= 2 else None}
    return compare_predictions(test_set.labels, before, after, test_set.snr_db, meta)


def draw_doppler(n: int, f_range: Sequence[float], seed: int) -> np.ndarray:
    """Per-frame shifts, |f_d| uniform in ``f_range`` with a uniformly random sign."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    lo, hi = f_range
    mag = rng.uniform(lo, hi, n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return mag * sign


def doppler_report(model: Model, test_set: Dataset, f_d: np.ndarray, sample_rate_hz: float,
                   metadata: dict | None = None) -> EvalReport:
    before = model.predict(test_set.iq)
    shifted = apply_doppler_time(test_set.iq, f_d, sample_rate_hz)
    after = model.predict(shifted)
    return compare_predictions(test_set.labels, before, after, test_set.snr_db, metadata)


@dataclass
class DopplerComparison:
    invariant: EvalReport
    vanilla: EvalReport


def run_random_doppler_experiment(invariant_model: Model, vanilla_model: Model, test_set: Dataset,
                                  f_range: Sequence[float] = (1.0, 5000.0),
                                  sample_rate_hz: float = 1e6, seed: int = 0) -> DopplerComparison:
    """Same per-frame random Doppler applied to the inputs of both models."""
    f_d = draw_doppler(len(test_set), f_range, seed)
    meta = {"experiment": "random_doppler", "f_range_hz": list(f_range),
            "sample_rate_hz": sample_rate_hz, "seed": seed}
    inv = doppler_report(invariant_model, test_set, f_d, sample_rate_hz,
                         {**meta, "model": invariant_model.config_dict()})
    van = doppler_report(vanilla_model, test_set, f_d, sample_rate_hz,
                         {**meta, "model": vanilla_model.config_dict()})
    return DopplerComparison(inv, van)


# ---------------------------------------------------------------------- sweep

@dataclass
class SweepCell:
    padding: int
    stride: int
    total_abs_delta: float
    condition_ok: bool
    abs_delta: dict[str, float]
    before: dict[str, float]
    epoch_seconds: float


@dataclass
class SweepReport:
    cells: list[SweepCell]
    metadata: dict = field(default_factory=dict)

    def mean_delta(self, condition_ok: bool) -> float:
        vals = [c.total_abs_delta for c in self.cells if c.condition_ok == condition_ok]
        return float(np.mean(vals)) if vals else float("nan")


def _sweep_cell(args) -> SweepCell:
    p, s, conv_padding, train_set, test_set, cfg, f_d, fs, model_seed = args
    model = init_invariant(InvariantModelConfig(p=p, s=s, conv_padding=conv_padding), model_seed)
    hist = train(model, train_set, cfg)
    rep = doppler_report(model, test_set, f_d, fs)
    return SweepCell(p, s, rep.total_abs_delta, s >= 2 and padding_condition(p, s), rep.abs_delta,
                     rep.before, float(np.mean([h.seconds for h in hist])))


def run_sweep(p_list: Iterable[int], s_list: Iterable[int], train_set: Dataset, test_set: Dataset,
              cfg: TrainConfig, conv_padding: str = "zero", f_range: Sequence[float] = (1.0, 5000.0),
              sample_rate_hz: float = 1e6, seed: int = 0, jobs: int = 1) -> SweepReport:
    """Train and score one invariant model per (padding, stride) cell.

    Every cell sees the same split, the same model seed and the same per-frame
    Doppler draws, so cells differ only in their architecture.
    """
    p_list, s_list = list(p_list), list(s_list)
    if not p_list or not s_list:
        raise ValueError("sweep needs non-empty padding and stride lists")
    f_d = draw_doppler(len(test_set), f_range, seed)
    jobs_args = [(p, s, conv_padding, train_set, test_set, cfg, f_d, sample_rate_hz, seed)
                 for s in s_list for p in p_list]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            cells = list(pool.map(_sweep_cell, jobs_args))
    else:
        cells = []
        for a in jobs_args:
            cells.append(_sweep_cell(a))
            log.info("sweep p=%d s=%d total|d|=%.3f", a[0], a[1], cells[-1].total_abs_delta)
    meta = {"experiment": "sweep", "conv_padding": conv_padding, "f_range_hz": list(f_range),
            "sample_rate_hz": sample_rate_hz, "seed": seed, "train": asdict(cfg)}
    return SweepReport(cells, meta)


# -------------------------------------------------------------------- runtime

@dataclass
class RuntimeCell:
    padding: int
    stride: int
    epoch_seconds: list[float]

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.epoch_seconds))


def measure_runtime(p_list: Iterable[int], s_list: Iterable[int], train_set: Dataset,
                    epochs: int = 3, batches_per_epoch: int = 4, batch_size: int = 256,
                    seed: int = 0, conv_padding: str = "zero") -> list[RuntimeCell]:
    """Mean wall-clock epoch time of invariant-model training at a fixed batch count."""
    if epochs < 3:
        raise ValueError("runtime means need at least 3 epochs")
    cells = []
    cfg = TrainConfig(epochs=epochs, batch_size=batch_size, seed=seed,
                      max_batches_per_epoch=batches_per_epoch)
    warm = TrainConfig(epochs=1, batch_size=batch_size, seed=seed, max_batches_per_epoch=1)
    for s in s_list:
        for p in p_list:
            model = init_invariant(InvariantModelConfig(p=p, s=s, conv_padding=conv_padding), seed)
            train(model, train_set, warm)
            hist = train(model, train_set, cfg)
            cells.append(RuntimeCell(p, s, [h.seconds for h in hist]))
    return cells
