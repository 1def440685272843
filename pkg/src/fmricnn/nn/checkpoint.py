"""Checkpoint files (little-endian).

::

    "LNT5" | u16 version | u32 layer count | u16 c | u16 h | u16 w   (input shape)
    per layer: u8 kind | u8 n_extents | n_extents x u32 | parameters as f32

Extents describe the layer: conv (out, in, k, k), maxpool (window, stride),
relu (), fc (out, in), softmax_xent (classes). Conv and fc layers are followed
by their weights then biases.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, DataError
from .layers import Conv2D, Linear, MaxPool2D, ReLU, SoftmaxCrossEntropy
from .network import Network

MAGIC = b"LNT5"
VERSION = 1
KIND_TAGS = {"conv": 1, "maxpool": 2, "relu": 3, "fc": 4, "softmax_xent": 5}
_TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


def _extents(layer) -> tuple[int, ...]:
    if isinstance(layer, Conv2D):
        return (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
    if isinstance(layer, MaxPool2D):
        return (layer.window, layer.stride)
    if isinstance(layer, Linear):
        return (layer.out_features, layer.in_features)
    if isinstance(layer, SoftmaxCrossEntropy):
        return (layer.num_classes,)
    return ()


def to_bytes(net: Network, state: dict[str, np.ndarray] | None = None) -> bytes:
    """Serialize ``net``; pass ``state`` to store other parameters (e.g. best)."""
    state = state or net.state_dict()
    layers = net.all_layers
    parts = [MAGIC, struct.pack("<HI3H", VERSION, len(layers), *net.input_shape)]
    for layer in layers:
        ext = _extents(layer)
        parts.append(struct.pack(f"<BB{len(ext)}I", KIND_TAGS[layer.kind], len(ext), *ext))
        for key in ("weight", "bias"):
            if key in layer.params:
                parts.append(state[f"{layer.name}.{key}"].astype("<f4").tobytes())
    return b"".join(parts)


def from_bytes(raw: bytes) -> Network:
    if raw[:4] != MAGIC:
        raise BadMagic(f"checkpoint magic {raw[:4]!r}")
    try:
        version, count, c, h, w = struct.unpack_from("<HI3H", raw, 4)
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        pos = 4 + struct.calcsize("<HI3H")
        layers = []
        counts: dict[str, int] = {}
        for _ in range(count):
            tag, n_ext = struct.unpack_from("<BB", raw, pos)
            pos += 2
            ext = struct.unpack_from(f"<{n_ext}I", raw, pos)
            pos += 4 * n_ext
            kind = _TAG_KINDS.get(tag)
            if kind is None:
                raise DataError(f"unknown layer tag {tag}")
            counts[kind] = counts.get(kind, 0) + 1
            name = f"{'pool' if kind == 'maxpool' else kind}{counts[kind]}"
            if kind == "conv":
                layer = Conv2D(ext[1], ext[0], ext[2], name)
            elif kind == "maxpool":
                layer = MaxPool2D(ext[0], ext[1], name)
            elif kind == "relu":
                layer = ReLU(name)
            elif kind == "fc":
                layer = Linear(ext[1], ext[0], name)
            else:
                layer = SoftmaxCrossEntropy(ext[0], "loss")
            for key in ("weight", "bias"):
                if key in layer.params:
                    p = layer.params[key]
                    nbytes = 4 * p.size
                    if pos + nbytes > len(raw):
                        raise DataError("checkpoint truncated")
                    p[...] = np.frombuffer(raw, "<f4", p.size, pos).reshape(p.shape)
                    pos += nbytes
            layers.append(layer)
    except struct.error as exc:
        raise DataError(f"checkpoint truncated: {exc}") from None
    return Network(layers, (c, h, w))


def save(path, net: Network, state=None) -> None:
    Path(path).write_bytes(to_bytes(net, state))


def load(path) -> Network:
    return from_bytes(Path(path).read_bytes())
