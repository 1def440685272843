from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch, UsageError
from .layers import Conv2D, Layer, Linear, MaxPool2D, ReLU, SoftmaxCrossEntropy, softmax


@dataclass(frozen=True)
class LayerSpec:
    """One layer descriptor.

    ``size`` is the filter / feature count (conv, fc), the class count for
    the loss head, or the pooling window; ``kernel`` is the conv filter size.
    """

    kind: str
    size: int = 0
    kernel: int = 0


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple[LayerSpec, ...] = field(default_factory=lambda: lenet5_layers())
    input_shape: tuple[int, int, int] = (1, 28, 28)

    @property
    def num_classes(self) -> int:
        return self.layers[-1].size


def lenet5_layers(conv=(20, 50), kernels=(5, 5), hidden=500, classes=2) -> tuple[LayerSpec, ...]:
    """conv -> pool -> conv -> pool -> fc -> relu -> fc -> softmax loss."""
    return (
        LayerSpec("conv", conv[0], kernels[0]),
        LayerSpec("maxpool", 2),
        LayerSpec("conv", conv[1], kernels[1]),
        LayerSpec("maxpool", 2),
        LayerSpec("fc", hidden),
        LayerSpec("relu"),
        LayerSpec("fc", classes),
        LayerSpec("softmax_xent", classes),
    )


def lenet5(input_shape=(1, 28, 28), **kwargs) -> NetworkConfig:
    return NetworkConfig(lenet5_layers(**kwargs), tuple(input_shape))


def small_lenet(input_shape=(1, 12, 12)) -> NetworkConfig:
    """Shrunk variant for gradient checks: 2 and 4 filters, fc 32."""
    return lenet5(input_shape, conv=(2, 4), kernels=(5, 3), hidden=32)


class Network:
    """Ordered layer stack ending in a softmax cross-entropy head."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int], seed: int | None = None):
        if not layers or not isinstance(layers[-1], SoftmaxCrossEntropy):
            raise ShapeMismatch("network must end with a softmax_xent layer")
        self.layers = layers[:-1]
        self.head: SoftmaxCrossEntropy = layers[-1]
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.best_state: dict[str, np.ndarray] | None = None
        self.shapes = self._infer_shapes()

    @property
    def all_layers(self) -> list[Layer]:
        return self.layers + [self.head]

    def _infer_shapes(self):
        shapes = [self.input_shape]
        for layer in self.all_layers:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        return shapes

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def layer(self, name: str) -> Layer:
        for layer in self.all_layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    # -- parameters --------------------------------------------------------

    def parameters(self):
        """Yield (qualified name, param array, grad array)."""
        for layer in self.layers:
            for key, p in layer.params.items():
                yield f"{layer.name}.{key}", p, layer.grads[key]

    def num_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p, _ in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p, _ in self.parameters():
            if state[name].shape != p.shape:
                raise ShapeMismatch(f"{name}: shape {state[name].shape} != {p.shape}")
            p[...] = state[name]

    # -- computation -------------------------------------------------------

    def _check_input(self, x):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(f"input shape {x.shape[1:]} != network input {self.input_shape}")

    def forward(self, x: np.ndarray, upto: int | None = None) -> np.ndarray:
        """Logits for a (batch, C, H, W) array, or the output of layer ``upto``."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if upto is not None and i == upto:
                break
        return x

    def activations(self, x: np.ndarray) -> list[np.ndarray]:
        out = []
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        for layer in self.layers:
            x = layer.forward(x)
            out.append(x)
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def loss(self, x: np.ndarray, labels) -> float:
        value = self.head.forward(self.forward(x), labels)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss is {value}")
        return value

    def backward(self) -> None:
        grad = self.head.backward()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def loss_and_grad(self, x: np.ndarray, labels) -> float:
        self.zero_grad()
        value = self.loss(x, labels)
        self.backward()
        return value

    def activation_pattern(self) -> list[np.ndarray]:
        """ReLU masks and pooling argmaxes from the most recent forward pass."""
        out = []
        for layer in self.layers:
            if isinstance(layer, ReLU):
                out.append(layer.mask.copy())
            elif isinstance(layer, MaxPool2D):
                out.append(layer.argmax.copy())
        return out


def build_network(config: NetworkConfig | None = None, seed: int | None = 0) -> Network:
    """Instantiate ``config`` and draw weights uniformly in +-sqrt(3 / fan_in).

    Biases start at zero. Layers are initialized in order from one seeded
    generator, so the same seed always gives the same network.
    """
    config = config or NetworkConfig()
    layers: list[Layer] = []
    counts: dict[str, int] = {}
    shape = tuple(config.input_shape)
    for spec in config.layers:
        counts[spec.kind] = counts.get(spec.kind, 0) + 1
        name = f"{'pool' if spec.kind == 'maxpool' else spec.kind}{counts[spec.kind]}"
        if spec.kind == "conv":
            layer = Conv2D(shape[0], spec.size, spec.kernel, name)
        elif spec.kind == "maxpool":
            layer = MaxPool2D(spec.size or 2, spec.size or 2, name)
        elif spec.kind == "relu":
            layer = ReLU(name)
        elif spec.kind == "fc":
            layer = Linear(int(np.prod(shape)), spec.size, name)
        elif spec.kind == "softmax_xent":
            layer = SoftmaxCrossEntropy(spec.size, "loss")
        else:
            raise UsageError(f"unknown layer kind {spec.kind!r}")
        shape = tuple(layer.output_shape(shape))
        layers.append(layer)

    rng = np.random.default_rng(seed)
    for layer in layers:
        if "weight" in layer.params:
            bound = np.sqrt(3.0 / layer.fan_in)
            w = layer.params["weight"]
            w[...] = rng.uniform(-bound, bound, size=w.shape)
    return Network(layers, config.input_shape, seed)
