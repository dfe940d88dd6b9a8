"""Readers and writers for the two interchange formats the inference
side consumes: PICSR1 rasters and PICSW1 weight stores.

Implemented from the byte layouts directly so this package has no code
dependency on the inference library; the files are the contract.

PICSR1: magic b"PICSR1", then little-endian
    u32 width, u32 height, f32 pixel_size_um, f32 wavelength_um,
    f32 shear_um, u8 channel_tag, i32 z_index, f64 timestamp_s,
    then width*height float32 pixels, row-major.

PICSW1: magic b"PICSW1", u32 record count, then per record
    u16 name length + UTF-8 name, u8 rank + rank u32 dims,
    prod(dims) float32 values. Record order is preserved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

RASTER_MAGIC = b"PICSR1"
RASTER_HEADER = "<IIfffBid"

WEIGHTS_MAGIC = b"PICSW1"

CHANNEL_PHASE = 0
CHANNEL_DAPI = 1
CHANNEL_DII = 2


class FormatError(ValueError):
    """A byte stream violates one of the container formats."""


@dataclass
class RasterFile:
    """Decoded PICSR1 contents."""

    data: np.ndarray
    pixel_size: float
    wavelength: float
    shear: float
    channel: int
    z_index: int
    timestamp: float


def save_raster(
    path,
    data: np.ndarray,
    pixel_size: float,
    wavelength: float = 0.78,
    shear: float = 0.0,
    channel: int = CHANNEL_DAPI,
    z_index: int = 0,
    timestamp: float = 0.0,
) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {arr.shape}")
    header = RASTER_MAGIC + struct.pack(
        RASTER_HEADER,
        arr.shape[1], arr.shape[0],
        pixel_size, wavelength, shear, channel, z_index, timestamp,
    )
    with open(path, "wb") as fh:
        fh.write(header + arr.tobytes())


def load_raster(path) -> RasterFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(RASTER_MAGIC)] != RASTER_MAGIC:
        raise FormatError(f"{path}: not a PICSR1 stream")
    header_size = len(RASTER_MAGIC) + struct.calcsize(RASTER_HEADER)
    if len(blob) < header_size:
        raise FormatError(f"{path}: truncated header")
    width, height, pixel_size, wavelength, shear, channel, z_index, ts = (
        struct.unpack_from(RASTER_HEADER, blob, len(RASTER_MAGIC))
    )
    if len(blob) != header_size + 4 * width * height:
        raise FormatError(f"{path}: payload does not match {width}x{height}")
    data = (
        np.frombuffer(blob, dtype="<f4", offset=header_size)
        .reshape(height, width)
        .astype(np.float32)
    )
    return RasterFile(data, pixel_size, wavelength, shear, channel, z_index, ts)


def save_weight_records(path, records: dict[str, np.ndarray]) -> None:
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(records))]
    for name, arr in records.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"record {name!r} holds non-finite values")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_weight_records(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a PICSW1 stream")
    off = len(WEIGHTS_MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"{path}: truncated stream")
        chunk = blob[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        if name in records:
            raise FormatError(f"{path}: duplicate record {name!r}")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n_elem = int(np.prod(dims, dtype=np.int64)) if rank else 1
        records[name] = (
            np.frombuffer(take(4 * n_elem), dtype="<f4")
            .reshape(dims)
            .astype(np.float32)
        )
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes")
    return records
