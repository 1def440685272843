"""Hand-differentiated layers.

Tensors are plain float64 numpy arrays shaped (batch, channels, height, width)
or (batch, features). Every parametric layer keeps ``params`` and ``grads``
dicts with matching keys; ``backward`` accumulates into ``grads``.
"""
from __future__ import annotations

import numpy as np

from ..errors import BadLabel, IndivisibleExtent, ShapeMismatch
from . import kernels


class Layer:
    kind = "layer"

    def __init__(self, name: str = ""):
        self.name = name or self.kind
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    """Valid cross-correlation, stride 1:
    ``out[n, o, i, j] = sum_{c,a,b} w[o, c, a, b] * x[n, c, i+a, j+b] + bias[o]``.
    """

    kind = "conv"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, name: str = ""):
        super().__init__(name)
        self.in_channels, self.out_channels, self.kernel = in_channels, out_channels, kernel
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kernel, kernel)),
            "bias": np.zeros(out_channels),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.kernel * self.kernel

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeMismatch(f"{self.name}: expected {self.in_channels} channels, got {c}")
        if h < self.kernel or w < self.kernel:
            raise ShapeMismatch(f"{self.name}: {h}x{w} input smaller than {self.kernel}x{self.kernel} filter")
        return self.out_channels, h - self.kernel + 1, w - self.kernel + 1

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"{self.name}: expected 4D input, got shape {x.shape}")
        _, ho, wo = self.output_shape(x.shape[1:])
        cols = kernels.im2col(x, self.kernel)
        w = self.params["weight"].reshape(self.out_channels, -1)
        out = cols @ w.T + self.params["bias"]
        self._cache = (x.shape, cols)
        return np.ascontiguousarray(out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2))

    def backward(self, grad):
        x_shape, cols = self._cache
        n, _, ho, wo = grad.shape
        if grad.shape != (x_shape[0], self.out_channels, x_shape[2] - self.kernel + 1, x_shape[3] - self.kernel + 1):
            raise ShapeMismatch(f"{self.name}: grad shape {grad.shape} does not match forward output")
        g2 = grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_channels)
        # dE/dw_ab = sum_ij dE/dx_ij * y_(i+a)(j+b), batched as one product
        self.grads["weight"] += (g2.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] += g2.sum(axis=0)
        dcols = g2 @ self.params["weight"].reshape(self.out_channels, -1)
        return kernels.col2im(dcols, x_shape, self.kernel)


class MaxPool2D(Layer):
    kind = "maxpool"

    def __init__(self, window: int = 2, stride: int = 2, name: str = ""):
        super().__init__(name)
        if window != stride:
            raise ShapeMismatch("only non-overlapping pooling (window == stride) is supported")
        self.window, self.stride = window, stride
        self._cache = None

    def output_shape(self, shape):
        c, h, w = shape
        p = self.window
        if h % p or w % p:
            raise IndivisibleExtent(f"{self.name}: {h}x{w} not divisible by pooling stride {p}")
        return c, h // p, w // p

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"{self.name}: expected 4D input, got shape {x.shape}")
        self.output_shape(x.shape[1:])
        out, arg = kernels.maxpool_forward(x, self.window)
        self._cache = (x.shape, arg)
        return out

    def backward(self, grad):
        shape, arg = self._cache
        return kernels.maxpool_backward(grad, arg, shape, self.window)

    @property
    def argmax(self):
        return None if self._cache is None else self._cache[1]


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name: str = ""):
        super().__init__(name)
        self.mask = None

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return np.where(self.mask, grad, 0.0)


class Linear(Layer):
    """Fully connected ``y = x_flat @ W.T + b``; inputs are flattened per sample."""

    kind = "fc"

    def __init__(self, in_features: int, out_features: int, name: str = ""):
        super().__init__(name)
        self.in_features, self.out_features = in_features, out_features
        self.params = {
            "weight": np.zeros((out_features, in_features)),
            "bias": np.zeros(out_features),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    @property
    def fan_in(self) -> int:
        return self.in_features

    def output_shape(self, shape):
        if int(np.prod(shape)) != self.in_features:
            raise ShapeMismatch(f"{self.name}: expected {self.in_features} features, got shape {shape}")
        return (self.out_features,)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        x2 = x.reshape(x.shape[0], -1)
        self._cache = (x.shape, x2)
        return x2 @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        shape, x2 = self._cache
        self.grads["weight"] += grad.T @ x2
        self.grads["bias"] += grad.sum(axis=0)
        return (grad @ self.params["weight"]).reshape(shape)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and the row-wise class probabilities."""
    loss, probs = _xent(logits, labels)
    return float(loss.mean()), probs


def _xent(logits, labels):
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (batch, classes), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {logits.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise BadLabel(f"labels outside [0, {logits.shape[1]})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = log_norm - z[np.arange(len(labels)), labels]
    return nll, np.exp(z - log_norm[:, None])


class SoftmaxCrossEntropy(Layer):
    kind = "softmax_xent"

    def __init__(self, num_classes: int = 2, name: str = ""):
        super().__init__(name)
        self.num_classes = num_classes
        self._cache = None

    def output_shape(self, shape):
        if shape != (self.num_classes,):
            raise ShapeMismatch(f"{self.name}: expected {self.num_classes} class scores, got {shape}")
        return shape

    def forward(self, logits, labels):
        loss, probs = softmax_xent(logits, labels)
        self._cache = (probs, np.asarray(labels))
        return loss

    def backward(self, grad=1.0):
        probs, labels = self._cache
        d = probs.copy()
        d[np.arange(len(labels)), labels] -= 1.0
        return d * (grad / len(labels))


# -- functional forms -------------------------------------------------------

def conv_forward(layer: Conv2D, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def conv_backward(layer: Conv2D, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate weight/bias gradients for ``x`` and return dE/dx."""
    layer.forward(x)
    return layer.backward(grad_out)


def maxpool_forward(x: np.ndarray, window: int = 2, stride: int = 2):
    layer = MaxPool2D(window, stride)
    return layer.forward(x), layer.argmax


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def fc_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    layer = Linear(weights.shape[1], weights.shape[0])
    layer.params["weight"], layer.params["bias"] = weights, bias
    return layer.forward(x)
