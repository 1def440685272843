from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyIndexSet
from .store import SliceRecordStore

_CHUNK = 4096


@dataclass
class MeanImage:
    pixels: np.ndarray  # (height, width)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def compute_mean_image(store: SliceRecordStore, indices) -> MeanImage:
    """Per-pixel mean over ``indices``, summed in fixed-size chunks."""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise EmptyIndexSet("mean image needs at least one record")
    total = np.zeros((store.height, store.width))
    for start in range(0, indices.size, _CHUNK):
        total += store.images(indices[start : start + _CHUNK]).sum(axis=0)
    return MeanImage(total / indices.size)
