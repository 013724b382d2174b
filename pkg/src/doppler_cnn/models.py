"""The Doppler-invariant complex CNN, the max-pool baseline, and checkpoints.

Invariant pipeline::

    frames -> zero pad p -> DFT (p* bins) -> [CC + ReLU -> APS(s)] x 3 -> GAP -> complex FC -> |.|

Baseline pipeline (time domain, I/Q as two real channels)::

    frames -> [Conv -> BatchNorm -> ReLU -> MaxPool(2)] x 3 -> flatten -> dropout -> FC
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cvnn
from .rf_synth import NUM_CLASSES
from .spectral import FRAME_LEN, PaddingConfig, bin_shift, pad_and_dft


@dataclass(frozen=True)
class InvariantModelConfig:
    p: int = 280
    s: int = 2
    channels: tuple[int, ...] = (64, 32, 16)
    kernel: int = 4
    conv_padding: str = "zero"
    n_classes: int = NUM_CLASSES
    frame_len: int = FRAME_LEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.p < 0 or self.s < 1:
            raise ValueError("need p >= 0 and s >= 1")
        if self.conv_padding not in cvnn.functional.PAD_MODES:
            raise ValueError(f"conv_padding must be one of {cvnn.functional.PAD_MODES}")

    @property
    def padding(self) -> PaddingConfig:
        return PaddingConfig(self.p, self.s, self.frame_len)

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Per-sample output shape of every stage, in network order."""
        lengths = self.padding.chain(len(self.channels))
        shapes = [("input", (1, lengths[0]))]
        for i, ch in enumerate(self.channels):
            shapes.append((f"cc{i + 1}", (ch, lengths[i])))
            shapes.append((f"aps{i + 1}", (ch, lengths[i + 1])))
        shapes.append(("gap", (self.channels[-1],)))
        shapes.append(("fc", (self.n_classes,)))
        return shapes


@dataclass(frozen=True)
class VanillaModelConfig:
    channels: tuple[int, ...] = (64, 32, 16)
    kernel: int = 4
    pool: int = 2
    dropout: float = 0.5
    n_classes: int = NUM_CLASSES
    frame_len: int = FRAME_LEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))


class Model:
    kind = "base"

    def __init__(self, config, net: cvnn.Sequential, seed: int) -> None:
        self.config = config
        self.net = net
        self.seed = seed
        first = net.layers[0]
        if isinstance(first, cvnn.Conv1d):
            first.input_grad = False

    def preprocess(self, frames: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward_features(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Run the network on already-preprocessed input."""
        return self.net.forward(x, train)

    def forward(self, frames: np.ndarray, train: bool = False) -> np.ndarray:
        return self.forward_features(self.preprocess(frames), train)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return self.net.backward(g)

    def params(self) -> dict[str, np.ndarray]:
        return self.net.named_params()

    def grads(self) -> dict[str, np.ndarray]:
        return self.net.named_grads()

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.net.layers)
                for k, v in getattr(layer, "buffers", {}).items()}

    def zero_grad(self) -> None:
        self.net.zero_grad()

    def predict_logits(self, frames: np.ndarray, batch_size: int = 512) -> np.ndarray:
        out = [self.forward(frames[i:i + batch_size]) for i in range(0, len(frames), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.n_classes), np.float32)

    def predict(self, frames: np.ndarray, batch_size: int = 512) -> np.ndarray:
        return self.predict_logits(frames, batch_size).argmax(axis=1)

    def config_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, **_jsonable(asdict(self.config))}


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class InvariantModel(Model):
    kind = "invariant"

    def preprocess(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames)
        if frames.shape[-1] != self.config.frame_len:
            raise ValueError(f"frames must have length {self.config.frame_len}")
        return pad_and_dft(frames, self.config.p)[:, None, :]

    def forward_spectrum(self, spec: np.ndarray, train: bool = False, shift: int = 0) -> np.ndarray:
        """Logits for padded spectra (B, p*), optionally after an integer bin shift."""
        if shift:
            spec = bin_shift(spec, shift)
        return self.forward_features(spec[:, None, :].astype(np.complex64), train)

    def trace(self, spec: np.ndarray) -> list[tuple[str, np.ndarray]]:
        """Intermediate tensors (names match ``layer_shapes``) for one inference pass."""
        x = spec[:, None, :].astype(np.complex64)
        out = [("input", x)]
        conv_i = aps_i = 0
        for layer in self.net.layers:
            x = layer.forward(x)
            if isinstance(layer, cvnn.ReLU):
                conv_i += 1
                out.append((f"cc{conv_i}", x))
            elif isinstance(layer, cvnn.APSPool):
                aps_i += 1
                out.append((f"aps{aps_i}", x))
            elif isinstance(layer, cvnn.GlobalAvgPool):
                out.append(("gap", x))
            elif isinstance(layer, cvnn.ComplexLinear):
                out.append(("fc", x))
        return out


class VanillaModel(Model):
    kind = "vanilla"

    def preprocess(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames)
        if frames.shape[-1] != self.config.frame_len:
            raise ValueError(f"frames must have length {self.config.frame_len}")
        return np.stack([frames.real, frames.imag], axis=1).astype(np.float32)


def init_invariant(config: InvariantModelConfig, seed: int = 0) -> InvariantModel:
    rng = np.random.default_rng(seed)
    layers: list[cvnn.Layer] = []
    in_ch = 1
    for ch in config.channels:
        layers += [cvnn.ComplexConv1d(in_ch, ch, config.kernel, config.conv_padding, rng),
                   cvnn.ReLU(), cvnn.APSPool(config.s)]
        in_ch = ch
    layers += [cvnn.GlobalAvgPool(), cvnn.ComplexLinear(in_ch, config.n_classes, rng), cvnn.Magnitude()]
    return InvariantModel(config, cvnn.Sequential(layers), seed)


def init_vanilla(config: VanillaModelConfig | None = None, seed: int = 0) -> VanillaModel:
    config = config or VanillaModelConfig()
    rng = np.random.default_rng(seed)
    layers: list[cvnn.Layer] = []
    in_ch, length = 2, config.frame_len
    for ch in config.channels:
        layers += [cvnn.Conv1d(in_ch, ch, config.kernel, "zero", rng), cvnn.BatchNorm1d(ch),
                   cvnn.ReLU(), cvnn.MaxPool1d(config.pool)]
        in_ch, length = ch, length // config.pool
    drop_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    layers += [cvnn.Flatten(), cvnn.Dropout(config.dropout, drop_rng),
               cvnn.Linear(in_ch * length, config.n_classes, rng)]
    return VanillaModel(config, cvnn.Sequential(layers), seed)


# ----------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"DOPCNNCK"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointConfigError(CheckpointError):
    pass


def _state(model: Model) -> dict[str, np.ndarray]:
    state = {f"param.{k}": v for k, v in model.params().items()}
    state.update({f"buffer.{k}": v for k, v in model.buffers().items()})
    return state


def save_checkpoint(model: Model, path: str | Path, extra: dict | None = None) -> None:
    """Magic, u16 version, u32 header length, JSON header (config + tensor index), f32 payload.

    Complex tensors are stored as interleaved (re, im) f32 pairs.
    """
    index, chunks, offset = [], [], 0
    for name, arr in _state(model).items():
        flat = np.ascontiguousarray(arr)
        if np.iscomplexobj(flat):
            flat = flat.astype(np.complex64).view(np.float32)
        data = flat.astype("<f4").ravel()
        index.append({"name": name, "shape": list(arr.shape), "complex": bool(np.iscomplexobj(arr)),
                      "offset": offset, "count": int(data.size)})
        chunks.append(data.tobytes())
        offset += data.size
    header = {"config": model.config_dict(), "index": index, "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HI", CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(b"".join(chunks))


def read_checkpoint_header(path: str | Path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    head = len(CKPT_MAGIC) + 6
    if len(raw) < head or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointMagicError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<HI", raw, len(CKPT_MAGIC))
    if version != CKPT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    try:
        header = json.loads(raw[head: head + hlen].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    return header, raw[head + hlen:]


def model_from_config(cfg: dict) -> Model:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    seed = cfg.pop("seed", 0)
    if kind == "invariant":
        return init_invariant(InvariantModelConfig(**cfg), seed)
    if kind == "vanilla":
        return init_vanilla(VanillaModelConfig(**cfg), seed)
    raise CheckpointConfigError(f"unknown model kind {kind!r}")


def load_checkpoint(path: str | Path, expected: Model | dict | None = None) -> Model:
    """Rebuild a model from ``path``.

    If ``expected`` (a model or config dict) is given, a checkpoint written for
    any other architecture is rejected with :class:`CheckpointConfigError`.
    """
    header, payload = read_checkpoint_header(path)
    cfg = header["config"]
    if expected is not None:
        want = expected.config_dict() if isinstance(expected, Model) else expected
        strip = lambda d: {k: v for k, v in d.items() if k != "seed"}  # noqa: E731
        if strip(want) != strip(cfg):
            raise CheckpointConfigError(f"{path}: checkpoint config {cfg} does not match {want}")
    try:
        model = model_from_config(cfg)
    except TypeError as exc:
        raise CheckpointConfigError(f"{path}: bad model config ({exc})") from exc
    values = np.frombuffer(payload, dtype="<f4")
    state = _state(model)
    entries = {e["name"]: e for e in header["index"]}
    if set(entries) != set(state):
        raise CheckpointShapeError(f"{path}: tensor names do not match the architecture")
    for name, target in state.items():
        e = entries[name]
        if tuple(e["shape"]) != target.shape or e["complex"] != bool(np.iscomplexobj(target)):
            raise CheckpointShapeError(f"{path}: {name} has shape {e['shape']}, expected {list(target.shape)}")
        count = target.size * (2 if e["complex"] else 1)
        if e["count"] != count or e["offset"] + count > values.size:
            raise CheckpointShapeError(f"{path}: {name} index points outside the payload")
        chunk = values[e["offset"]: e["offset"] + count]
        if e["complex"]:
            target[...] = chunk.view(np.complex64).reshape(target.shape)
        else:
            target[...] = chunk.reshape(target.shape)
    return model
