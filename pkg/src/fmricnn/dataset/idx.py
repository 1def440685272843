"""Import of IDX-format digit images (the MNIST container format)."""
from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from ..errors import BadMagic, CountMismatch, DataError, EmptyIndexSet
from .store import PIXEL_U8, SliceRecordStore, record_dtype, subject_hash

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SUBJECT = "idx"


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    if len(raw) < 4:
        raise DataError("IDX buffer shorter than its magic")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise BadMagic(f"IDX magic {magic:#010x}, expected {expected_magic:#010x}")
    ndim = magic & 0xFF
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    offset = 4 + 4 * ndim
    n = int(np.prod(dims))
    if len(raw) < offset + n:
        raise CountMismatch(f"IDX payload holds {len(raw) - offset} bytes, dims need {n}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset).reshape(dims)


def import_idx(
    images_bytes: bytes,
    labels_bytes: bytes,
    keep_labels: Mapping[int, int] | None = None,
    limit: int | None = None,
) -> SliceRecordStore:
    """Build a u8 store from an IDX image/label pair.

    ``keep_labels`` maps source digits to class indices; digits not in the
    map are dropped. ``limit`` keeps only the first ``limit`` selected images.
    """
    keep_labels = {0: 0, 1: 1} if keep_labels is None else dict(keep_labels)
    images = parse_idx(images_bytes, IMAGES_MAGIC)
    labels = parse_idx(labels_bytes, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images vs {labels.shape[0]} labels")

    selected = np.flatnonzero(np.isin(labels, list(keep_labels)))
    if limit is not None:
        selected = selected[:limit]
    if selected.size == 0:
        raise EmptyIndexSet(f"no images with labels {sorted(keep_labels)}")

    _, h, w = images.shape
    rec = np.zeros(selected.size, dtype=record_dtype(h, w, PIXEL_U8))
    rec["label"] = [keep_labels[int(d)] for d in labels[selected]]
    rec["subject"] = subject_hash(SUBJECT)
    rec["pixels"] = images[selected]
    return SliceRecordStore(rec, [SUBJECT])


def load_idx_pair(images_path, labels_path, keep_labels=None, limit=None) -> SliceRecordStore:
    with open(images_path, "rb") as fi, open(labels_path, "rb") as fl:
        return import_idx(fi.read(), fl.read(), keep_labels, limit)
