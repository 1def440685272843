"""Reader (and a minimal writer) for single-file NIfTI-1 volumes.

Only the fields needed to recover the voxel grid are decoded; orientation
(qform/sform) is ignored because slices are consumed as raw 2D arrays.
"""
from __future__ import annotations

import gzip
import math
import struct
import sys
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadDims,
    BadHeader,
    BadMagic,
    NonFiniteVoxel,
    TooShort,
    TruncatedData,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
SINGLE_FILE_MAGIC = b"n+1\x00"
PAIR_MAGIC = b"ni1\x00"

# NIfTI-1 datatype code -> (numpy kind, bits per voxel)
DATATYPES = {
    2: ("u1", 8),
    4: ("i2", 16),
    8: ("i4", 32),
    16: ("f4", 32),
    64: ("f8", 64),
}

_NATIVE = "<" if sys.byteorder == "little" else ">"


@dataclass(frozen=True)
class NiftiHeader:
    sizeof_hdr: int
    dim: tuple[int, ...]
    datatype_code: int
    bitpix: int
    vox_offset: int
    scl_slope: float
    scl_inter: float
    magic: bytes
    byteorder: str  # '<' or '>'

    @property
    def rank(self) -> int:
        return self.dim[0]

    @property
    def extents(self) -> tuple[int, int, int, int]:
        """(nx, ny, nz, nt); missing trailing axes are 1."""
        ext = list(self.dim[1 : self.rank + 1]) + [1] * 4
        return tuple(ext[:4])

    @property
    def is_native(self) -> bool:
        return self.byteorder == _NATIVE

    @property
    def is_single_file(self) -> bool:
        return self.magic == SINGLE_FILE_MAGIC

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.byteorder + DATATYPES[self.datatype_code][0])

    @property
    def n_voxels(self) -> int:
        nx, ny, nz, nt = self.extents
        return nx * ny * nz * nt

    @property
    def data_nbytes(self) -> int:
        return self.n_voxels * self.bitpix // 8


@dataclass
class Volume4D:
    """Decoded voxel grid.

    ``data`` has shape (nx, ny, nz, nt) and is stored x-fastest
    (Fortran order), matching the on-disk layout.
    """

    data: np.ndarray

    @property
    def extents(self) -> tuple[int, int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def voxels(self) -> np.ndarray:
        """Flat voxel array in x-fastest order."""
        return self.data.ravel(order="F")


def _dim0(raw: bytes, order: str) -> int:
    return struct.unpack_from(order + "h", raw, 40)[0]


def parse_header(raw: bytes) -> NiftiHeader:
    """Decode the 348-byte NIfTI-1 header at the start of ``raw``.

    Byte order is whichever of native / swapped puts ``dim[0]`` in [1, 7].
    """
    raw = bytes(raw[:HEADER_SIZE]) if len(raw) >= HEADER_SIZE else raw
    if len(raw) < HEADER_SIZE:
        raise TooShort(f"need {HEADER_SIZE} header bytes, got {len(raw)}")

    swapped = ">" if _NATIVE == "<" else "<"
    for order in (_NATIVE, swapped):
        if 1 <= _dim0(raw, order) <= 7:
            break
    else:
        raise BadDims(f"dim[0]={_dim0(raw, _NATIVE)} outside [1, 7] in both byte orders")

    (sizeof_hdr,) = struct.unpack_from(order + "i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise BadHeader(f"sizeof_hdr={sizeof_hdr}, expected {HEADER_SIZE}")
    magic = raw[344:348]
    if magic not in (SINGLE_FILE_MAGIC, PAIR_MAGIC):
        raise BadMagic(f"magic {magic!r} is not n+1 or ni1")

    dim = struct.unpack_from(order + "8h", raw, 40)
    rank = dim[0]
    if any(d < 1 for d in dim[1 : rank + 1]):
        raise BadDims(f"non-positive extent in dim={dim}")
    if any(d != 1 for d in dim[5 : rank + 1]):
        raise BadDims(f"axes beyond the fourth must be singleton, dim={dim}")

    datatype, bitpix = struct.unpack_from(order + "2h", raw, 70)
    if datatype not in DATATYPES:
        raise UnsupportedDatatype(f"datatype code {datatype}")
    if bitpix != DATATYPES[datatype][1]:
        raise UnsupportedDatatype(f"bitpix {bitpix} inconsistent with datatype {datatype}")

    vox_offset, scl_slope, scl_inter = struct.unpack_from(order + "3f", raw, 108)
    if not math.isfinite(vox_offset) or vox_offset < 0 or vox_offset != int(vox_offset):
        raise BadHeader(f"vox_offset {vox_offset} is not a non-negative integer")
    vox_offset = int(vox_offset)
    if magic == SINGLE_FILE_MAGIC and vox_offset < HEADER_SIZE + 4:
        raise BadHeader(f"vox_offset {vox_offset} < 352 in a single-file volume")

    return NiftiHeader(
        sizeof_hdr=sizeof_hdr,
        dim=tuple(dim),
        datatype_code=datatype,
        bitpix=bitpix,
        vox_offset=vox_offset,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        magic=magic,
        byteorder=order,
    )


def read_volume(header: NiftiHeader, raw: bytes) -> Volume4D:
    """Decode voxels from ``raw`` starting at ``header.vox_offset``.

    For a two-file pair, pass the image-file bytes as ``raw``.
    A zero or non-finite slope means "no scaling".
    """
    start = header.vox_offset
    end = start + header.data_nbytes
    if len(raw) < end:
        raise TruncatedData(f"need {end} bytes, got {len(raw)}")
    flat = np.frombuffer(raw, dtype=header.dtype, count=header.n_voxels, offset=start)
    values = flat.astype(np.float64)
    slope, inter = header.scl_slope, header.scl_inter
    if slope != 0 and math.isfinite(slope):
        values = values * float(slope) + float(inter)
    if not np.isfinite(values).all():
        raise NonFiniteVoxel(f"{np.count_nonzero(~np.isfinite(values))} non-finite voxels")
    return Volume4D(values.reshape(header.extents, order="F"))


def _read(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except (gzip.BadGzipFile, EOFError) as exc:
        raise TruncatedData(f"{path}: {exc}") from None


def load(path) -> Volume4D:
    """Read ``.nii``, ``.nii.gz`` or an ``.hdr``/``.img`` pair."""
    raw = _read(path)
    header = parse_header(raw)
    if header.is_single_file:
        return read_volume(header, raw)
    name = str(path)
    stem = name[: -len(".gz")] if name.endswith(".gz") else name
    if not stem.endswith(".hdr"):
        raise BadMagic("ni1 header given without a matching .img file")
    img = stem[: -len(".hdr")] + ".img"
    return read_volume(header, _read(img + ".gz" if name.endswith(".gz") else img))


def encode(
    data: np.ndarray,
    datatype_code: int = 64,
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
    byteorder: str = "<",
) -> bytes:
    """Serialize ``data`` (up to 4D, x-fastest) as a single-file NIfTI-1.

    Values are cast to the target datatype as-is; choose ``scl_slope``
    and ``scl_inter`` so that stored raw values decode to what you want.
    """
    if datatype_code not in DATATYPES:
        raise UnsupportedDatatype(f"datatype code {datatype_code}")
    data = np.asarray(data)
    if not 1 <= data.ndim <= 7:
        raise BadDims(f"rank {data.ndim}")
    kind, bitpix = DATATYPES[datatype_code]
    dim = [data.ndim, *data.shape] + [1] * (7 - data.ndim)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into(byteorder + "i", hdr, 0, HEADER_SIZE)
    struct.pack_into(byteorder + "8h", hdr, 40, *dim)
    struct.pack_into(byteorder + "2h", hdr, 70, datatype_code, bitpix)
    struct.pack_into(byteorder + "8f", hdr, 76, 0.0, *([1.0] * 7))  # pixdim
    struct.pack_into(byteorder + "3f", hdr, 108, 352.0, scl_slope, scl_inter)
    hdr[344:348] = SINGLE_FILE_MAGIC
    body = np.asarray(data, dtype=np.dtype(byteorder + kind)).tobytes(order="F")
    return bytes(hdr) + b"\x00" * 4 + body


def save(path, data: np.ndarray, **kwargs) -> None:
    """Write a single-file NIfTI-1; a ``.gz`` suffix compresses it."""
    raw = encode(data, **kwargs)
    if str(path).endswith(".gz"):
        raw = gzip.compress(raw, mtime=0)
    with open(path, "wb") as fh:
        fh.write(raw)
