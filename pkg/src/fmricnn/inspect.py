"""Layer statistics and filter images for a trained network."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import MeanImage, SliceImage
from .errors import NoSuchLayer, NotAConvLayer, ShapeMismatch
from .nn import Conv2D, Network

HIST_BINS = 32
STATS_HEADER = ("layer", "role", "min", "max", "mean", "std")


@dataclass
class LayerStats:
    layer: str
    role: str  # "weights" or "activations"
    min: float
    max: float
    mean: float
    std: float
    histogram: np.ndarray
    bin_edges: np.ndarray

    @property
    def count(self) -> int:
        return int(self.histogram.sum())


def tensor_stats(layer: str, role: str, values: np.ndarray) -> LayerStats:
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    mean = min(max(float(v.mean()), lo), hi)
    hist, edges = np.histogram(v, bins=HIST_BINS, range=(lo, hi))
    return LayerStats(layer, role, lo, hi, mean, float(v.std()), hist, edges)


def layer_statistics(net: Network, sample: SliceImage | np.ndarray,
                     mean: MeanImage | None = None) -> list[LayerStats]:
    """Stats for the input, then per layer its weights (if any) and output."""
    pixels = sample.pixels if isinstance(sample, SliceImage) else np.asarray(sample, dtype=np.float64)
    if pixels.ndim == 2:
        pixels = pixels[None]
    if tuple(pixels.shape) != net.input_shape:
        raise ShapeMismatch(f"sample shape {pixels.shape} != network input {net.input_shape}")
    if mean is not None:
        pixels = pixels - mean.pixels
    out = [tensor_stats("data", "activations", pixels)]
    for layer, act in zip(net.layers, net.activations(pixels[None])):
        if "weight" in layer.params:
            out.append(tensor_stats(layer.name, "weights", layer.params["weight"]))
        out.append(tensor_stats(layer.name, "activations", act))
    return out


def stats_csv(stats: list[LayerStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_HEADER)
    for s in stats:
        w.writerow([s.layer, s.role, repr(s.min), repr(s.max), repr(s.mean), repr(s.std)])
    return buf.getvalue()


def filter_to_gray(f: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Min-max to [0, maxval]; constant filters become mid-gray."""
    lo, hi = f.min(), f.max()
    if hi == lo:
        return np.full(f.shape, (maxval + 1) // 2, dtype=np.uint8)
    return np.floor((f - lo) / (hi - lo) * maxval + 0.5).astype(np.uint8)


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + image.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM: {tokens[0]!r}")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, np.uint8, w * h, pos + 1).reshape(h, w)


def dump_filters(net: Network, layer_name: str, out_dir) -> int:
    """Write ``<layer>_o<out>_i<in>.pgm`` for every 2D filter slice."""
    try:
        layer = net.layer(layer_name)
    except KeyError:
        raise NoSuchLayer(f"no layer named {layer_name!r}") from None
    if not isinstance(layer, Conv2D):
        raise NotAConvLayer(f"{layer_name!r} is a {layer.kind} layer")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w = layer.params["weight"]
    for o in range(w.shape[0]):
        for i in range(w.shape[1]):
            write_pgm(out_dir / f"{layer_name}_o{o}_i{i}.pgm", filter_to_gray(w[o, i]))
    return w.shape[0] * w.shape[1]
