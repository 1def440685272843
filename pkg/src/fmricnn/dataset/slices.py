from __future__ import annotations

from typing import Iterator

import cv2
import numpy as np

from ..errors import DropTooLarge, EmptyVolume
from ..nifti import Volume4D
from .store import SliceImage


def normalize_minmax(image: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant image maps to zeros."""
    lo, hi = image.min(), image.max()
    if hi == lo:
        return np.zeros_like(image, dtype=np.float64)
    return (image - lo) / (hi - lo)


def resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = size
    if image.shape == (h, w):
        return image.astype(np.float64, copy=True)
    return cv2.resize(np.ascontiguousarray(image, dtype=np.float64), (w, h),
                      interpolation=cv2.INTER_LINEAR)


def iter_slices(
    vol: Volume4D,
    drop_low_z: int = 10,
    resize_to: tuple[int, int] | None = None,
    label: int = 0,
    subject_id: str = "",
) -> Iterator[SliceImage]:
    nx, ny, nz, nt = vol.extents
    if nx * ny * nz * nt == 0:
        raise EmptyVolume(f"volume extents {vol.extents}")
    if not 0 <= drop_low_z < nz:
        raise DropTooLarge(f"cannot drop {drop_low_z} of {nz} z-slices")
    for t in range(nt):
        for z in range(drop_low_z, nz):
            img = normalize_minmax(vol.data[:, :, z, t])
            if resize_to is not None:
                img = np.clip(resize_bilinear(img, resize_to), 0.0, 1.0)
            yield SliceImage(img, label, subject_id, z, t)


def extract_slices(
    vol: Volume4D,
    drop_low_z: int = 10,
    resize_to: tuple[int, int] | None = None,
    label: int = 0,
    subject_id: str = "",
) -> list[SliceImage]:
    """Cut a 4D volume into its xy-planes, skipping the lowest ``drop_low_z``.

    Volumes are concatenated time-point by time-point, so the output order is
    t-major, z-minor. Each slice has shape (nx, ny) and is min-max normalized
    before the optional bilinear resize.
    """
    return list(iter_slices(vol, drop_low_z, resize_to, label, subject_id))
