"""Layer objects: parameters, gradient buffers and the forward cache for one pass."""

from __future__ import annotations

import numpy as np

from . import functional as F


class Layer:
    """Minimal layer protocol.

    ``forward`` keeps whatever ``backward`` needs on the instance, so a layer
    object must not be shared by concurrent training passes.
    """

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _accumulate(self, name: str, g: np.ndarray) -> None:
        if name in self.grads:
            self.grads[name] += g.astype(self.params[name].dtype)
        else:
            self.grads[name] = g.astype(self.params[name].dtype)


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> np.ndarray:
    dtype = np.dtype(dtype)
    if dtype.kind == "c":
        re = rng.uniform(-bound, bound, shape)
        im = rng.uniform(-bound, bound, shape)
        return (re + 1j * im).astype(dtype)
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Conv1d(Layer):
    """Same-length stride-1 convolution; complex when ``dtype`` is complex.

    In the complex case ``w = w_r + j w_i`` so one complex product carries the
    four real convolutions Re = x_r*w_r - x_i*w_i, Im = x_r*w_i + x_i*w_r.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 4, padding: str = "zero",
                 rng: np.random.Generator | None = None, dtype=np.float32) -> None:
        super().__init__()
        if padding not in F.PAD_MODES:
            raise ValueError(f"padding must be one of {F.PAD_MODES}")
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_ch * kernel)
        self.padding = padding
        self.input_grad = True  # the first layer of a network can skip dx
        self.params["w"] = _uniform(rng, bound, (out_ch, in_ch, kernel), dtype)
        self.params["b"] = _uniform(rng, bound, (out_ch,), dtype)

    def forward(self, x, train=False):
        y, self._cache = F.conv1d_forward(x, self.params["w"], self.params["b"], self.padding)
        return y

    def backward(self, g):
        dx, dw, db = F.conv1d_backward(g, self._cache, self.input_grad)
        self._accumulate("w", dw)
        self._accumulate("b", db)
        return dx


class ComplexConv1d(Conv1d):
    def __init__(self, in_ch, out_ch, kernel=4, padding="zero", rng=None, dtype=np.complex64):
        super().__init__(in_ch, out_ch, kernel, padding, rng, dtype)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32) -> None:
        super().__init__()
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_features)
        self.params["w"] = _uniform(rng, bound, (out_features, in_features), dtype)
        self.params["b"] = _uniform(rng, bound, (out_features,), dtype)

    def forward(self, x, train=False):
        y, self._cache = F.linear_forward(x, self.params["w"], self.params["b"])
        return y

    def backward(self, g):
        dx, dw, db = F.linear_backward(g, self._cache)
        self._accumulate("w", dw)
        self._accumulate("b", db)
        return dx


class ComplexLinear(Linear):
    def __init__(self, in_features, out_features, rng=None, dtype=np.complex64):
        super().__init__(in_features, out_features, rng, dtype)


class ReLU(Layer):
    def forward(self, x, train=False):
        y, self._cache = F.relu_forward(x)
        return y

    def backward(self, g):
        return F.relu_backward(g, self._cache)


class APSPool(Layer):
    def __init__(self, stride: int) -> None:
        super().__init__()
        self.stride = stride
        self.last_offsets: np.ndarray | None = None

    def forward(self, x, train=False):
        y, self._cache = F.aps_forward(x, self.stride)
        self.last_offsets = self._cache[0]
        return y

    def backward(self, g):
        return F.aps_backward(g, self._cache)


class GlobalAvgPool(Layer):
    """(B, C, L) -> (B, C); the flatten is implicit."""

    def forward(self, x, train=False):
        y, self._cache = F.gap_forward(x)
        return y

    def backward(self, g):
        return F.gap_backward(g, self._cache)


class Magnitude(Layer):
    def forward(self, x, train=False):
        y, self._cache = F.magnitude_forward(x)
        return y

    def backward(self, g):
        return F.magnitude_backward(g, self._cache)


class MaxPool1d(Layer):
    def __init__(self, kernel: int = 2, stride: int | None = None) -> None:
        super().__init__()
        self.kernel = kernel
        self.stride = stride or kernel

    def forward(self, x, train=False):
        y, self._cache = F.maxpool_forward(x, self.kernel, self.stride)
        return y

    def backward(self, g):
        return F.maxpool_backward(g, self._cache)


class BatchNorm1d(Layer):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32) -> None:
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        # running statistics are state, not trainable parameters
        self.buffers = {
            "running_mean": np.zeros(channels, dtype=np.float32),
            "running_var": np.ones(channels, dtype=np.float32),
        }

    def forward(self, x, train=False):
        y, self._cache = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"], self.buffers["running_mean"],
            self.buffers["running_var"], train, self.momentum, self.eps)
        return y

    def backward(self, g):
        dx, dgamma, dbeta = F.batchnorm_backward(g, self._cache)
        self._accumulate("gamma", dgamma)
        self._accumulate("beta", dbeta)
        return dx


class Dropout(Layer):
    def __init__(self, rate: float = 0.5, rng: np.random.Generator | None = None) -> None:
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x, train=False):
        y, self._cache = F.dropout_forward(x, self.rate, train, self.rng)
        return y

    def backward(self, g):
        return F.dropout_backward(g, self._cache)


class Flatten(Layer):
    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._cache)


class Sequential:
    def __init__(self, layers: list[Layer]) -> None:
        self.layers = layers

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": layer.grads[k] for i, layer in enumerate(self.layers) for k in layer.params}
