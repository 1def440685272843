"""Lossless on-disk store of labeled 2D slices.

File layout (little-endian)::

    "FMRC" | u16 version | u32 count | u16 height | u16 width | u8 pixel_format
    count x ( u8 label | u32 subject_hash | u16 z | u16 t | height*width pixels )

Pixels are ``u8`` (quantized, value/255) for format 0 and ``f32`` for format 1.
A ``<path>.manifest`` sidecar holds ``key=value`` lines.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import BadMagic, CountMismatch, DataError, EmptyIndexSet

MAGIC = b"FMRC"
VERSION = 1
PIXEL_U8 = 0
PIXEL_F32 = 1
_HEADER = struct.Struct("<4sHIHHB")


def subject_hash(subject_id: str) -> int:
    return zlib.crc32(subject_id.encode("utf-8"))


def record_dtype(height: int, width: int, pixel_format: int) -> np.dtype:
    pix = "u1" if pixel_format == PIXEL_U8 else "<f4"
    return np.dtype(
        [
            ("label", "u1"),
            ("subject", "<u4"),
            ("z", "<u2"),
            ("t", "<u2"),
            ("pixels", pix, (height, width)),
        ]
    )


@dataclass
class SliceImage:
    pixels: np.ndarray  # (height, width) float64
    label: int
    subject_id: str = ""
    z_index: int = 0
    t_index: int = 0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def quantize(pixels: np.ndarray, pixel_format: int) -> np.ndarray:
    if pixel_format == PIXEL_U8:
        return np.clip(np.floor(np.asarray(pixels) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if pixel_format == PIXEL_F32:
        return np.asarray(pixels, dtype=np.float32)
    raise DataError(f"unknown pixel format {pixel_format}")


class SliceRecordStore:
    """In-memory view of a record store.

    ``records`` is a structured numpy array using :func:`record_dtype`.
    ``subjects`` lists subject ids in first-appearance order so that hashes
    read from disk can be mapped back to names.
    """

    def __init__(self, records: np.ndarray, subjects: Sequence[str] = (), seed: int | None = None):
        self.records = records
        self.subjects = list(subjects)
        self.seed = seed
        self._names = {subject_hash(s): s for s in self.subjects}
        self._float_cache: np.ndarray | None = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_slices(
        cls,
        slices: Iterable[SliceImage],
        pixel_format: int = PIXEL_F32,
        seed: int | None = None,
    ) -> "SliceRecordStore":
        slices = list(slices)
        if not slices:
            raise EmptyIndexSet("no slices given")
        h, w = slices[0].pixels.shape
        rec = np.zeros(len(slices), dtype=record_dtype(h, w, pixel_format))
        subjects: dict[str, None] = {}
        for i, s in enumerate(slices):
            if s.pixels.shape != (h, w):
                raise CountMismatch(f"slice {i} has shape {s.pixels.shape}, expected {(h, w)}")
            rec[i] = (s.label, subject_hash(s.subject_id), s.z_index, s.t_index,
                      quantize(s.pixels, pixel_format))
            subjects.setdefault(s.subject_id)
        return cls(rec, list(subjects), seed)

    @classmethod
    def from_arrays(
        cls,
        pixels: np.ndarray,
        labels: np.ndarray,
        subject_ids: Sequence[str],
        z: np.ndarray | None = None,
        t: np.ndarray | None = None,
        pixel_format: int = PIXEL_F32,
        seed: int | None = None,
    ) -> "SliceRecordStore":
        n, h, w = pixels.shape
        rec = np.zeros(n, dtype=record_dtype(h, w, pixel_format))
        rec["label"] = labels
        rec["subject"] = [subject_hash(s) for s in subject_ids]
        if z is not None:
            rec["z"] = z
        if t is not None:
            rec["t"] = t
        rec["pixels"] = quantize(pixels, pixel_format)
        return cls(rec, list(dict.fromkeys(subject_ids)), seed)

    @classmethod
    def concat(cls, stores: Sequence["SliceRecordStore"]) -> "SliceRecordStore":
        dtypes = {s.records.dtype for s in stores}
        if len(dtypes) != 1:
            raise CountMismatch("stores differ in geometry or pixel format")
        subjects = list(dict.fromkeys(x for s in stores for x in s.subjects))
        return cls(np.concatenate([s.records for s in stores]), subjects, stores[0].seed)

    # -- accessors ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.records)

    @property
    def height(self) -> int:
        return self.records.dtype["pixels"].shape[0]

    @property
    def width(self) -> int:
        return self.records.dtype["pixels"].shape[1]

    @property
    def pixel_format(self) -> int:
        return PIXEL_U8 if self.records.dtype["pixels"].base == np.uint8 else PIXEL_F32

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].astype(np.int64)

    @property
    def subject_hashes(self) -> np.ndarray:
        return self.records["subject"]

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.records["label"], return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def subject_name(self, h: int) -> str:
        return self._names.get(int(h), f"{int(h):08x}")

    def pixels(self) -> np.ndarray:
        """All images as float64 (count, height, width), cached."""
        if self._float_cache is None:
            raw = self.records["pixels"]
            if self.pixel_format == PIXEL_U8:
                self._float_cache = raw.astype(np.float64) / 255.0
            else:
                self._float_cache = raw.astype(np.float64)
        return self._float_cache

    def images(self, indices) -> np.ndarray:
        return self.pixels()[np.asarray(indices, dtype=np.intp)]

    def slice(self, i: int) -> SliceImage:
        r = self.records[i]
        return SliceImage(
            pixels=self.pixels()[i].copy(),
            label=int(r["label"]),
            subject_id=self.subject_name(r["subject"]),
            z_index=int(r["z"]),
            t_index=int(r["t"]),
        )

    def subset(self, indices) -> "SliceRecordStore":
        rec = self.records[np.asarray(indices, dtype=np.intp)]
        present = set(rec["subject"].tolist())
        subjects = [s for s in self.subjects if subject_hash(s) in present]
        return SliceRecordStore(rec, subjects, self.seed)

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, len(self), self.height, self.width, self.pixel_format)
        return head + self.records.tobytes()

    def manifest(self) -> dict[str, str]:
        counts = self.class_counts()
        return {
            "format": "FMRC",
            "version": str(VERSION),
            "count": str(len(self)),
            "height": str(self.height),
            "width": str(self.width),
            "pixel_format": "u8" if self.pixel_format == PIXEL_U8 else "f32",
            "class_0": str(counts.get(0, 0)),
            "class_1": str(counts.get(1, 0)),
            "subjects": ",".join(self.subjects),
            "seed": "" if self.seed is None else str(self.seed),
        }

    def write(self, path) -> None:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        lines = [f"{k}={v}\n" for k, v in self.manifest().items()]
        manifest_path(path).write_text("".join(lines))

    @classmethod
    def from_bytes(cls, raw: bytes, subjects: Sequence[str] = (), seed: int | None = None):
        if len(raw) < _HEADER.size:
            raise DataError(f"store too short: {len(raw)} bytes")
        magic, version, count, h, w, fmt = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise BadMagic(f"store magic {magic!r}")
        if version != VERSION:
            raise DataError(f"unsupported store version {version}")
        if fmt not in (PIXEL_U8, PIXEL_F32):
            raise DataError(f"unknown pixel format {fmt}")
        dtype = record_dtype(h, w, fmt)
        if len(raw) != _HEADER.size + count * dtype.itemsize:
            raise CountMismatch(
                f"header says {count} records, file holds {(len(raw) - _HEADER.size) / dtype.itemsize}"
            )
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=_HEADER.size).copy()
        return cls(rec, subjects, seed)

    @classmethod
    def read(cls, path) -> "SliceRecordStore":
        path = Path(path)
        meta = read_manifest(path)
        subjects = [s for s in meta.get("subjects", "").split(",") if s]
        seed = int(meta["seed"]) if meta.get("seed") else None
        store = cls.from_bytes(path.read_bytes(), subjects, seed)
        if meta and int(meta.get("count", len(store))) != len(store):
            raise CountMismatch(f"manifest count {meta['count']} != stored {len(store)}")
        return store


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest")


def read_manifest(path) -> dict[str, str]:
    mp = manifest_path(path)
    if not mp.exists():
        return {}
    out = {}
    for line in mp.read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
