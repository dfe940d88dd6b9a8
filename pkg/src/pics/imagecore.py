"""Raster containers, Fourier helpers, and the PICSR1 single-image format.

Rasters hold one channel of float32 pixels on a square grid with a physical
pixel size in micrometers. Frequency-domain work uses the unnormalized
forward DFT and the 1/(W*H) inverse, with the signed-index convention
i -> i for i < N/2 and i -> i - N for i >= N/2.

PICSR1 byte layout (little endian):

    offset  size  field
    0       6     magic b"PICSR1"
    6       4     u32 width
    10      4     u32 height
    14      4     f32 pixel_size_um
    18      4     f32 wavelength_um
    22      4     f32 shear_um
    26      1     u8 channel_tag
    27      4     i32 z_index
    31      8     f64 timestamp_s
    39      4*W*H f32 pixels, row major

The payload must match the declared dimensions exactly; no trailing bytes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

PICSR1_MAGIC = b"PICSR1"
_HEADER_FMT = "<IIfffBid"
_HEADER_SIZE = len(PICSR1_MAGIC) + struct.calcsize(_HEADER_FMT)

# guards against absurd headers before allocating the payload
MAX_DIM = 1 << 20
MAX_PIXELS = 1 << 28


class FormatError(ValueError):
    """A PICSR1 byte stream violates the format."""


class BadMagicError(FormatError):
    """Leading bytes are not the PICSR1 magic."""


class TruncatedPayloadError(FormatError):
    """Payload size disagrees with the declared dimensions."""


class DimensionError(FormatError):
    """Declared dimensions are zero or implausibly large."""


class ChannelTag(enum.IntEnum):
    PHASE = 0
    DAPI = 1
    DII = 2
    BRIGHTFIELD = 3
    DIC = 4


@dataclass
class Raster:
    """One image channel: float32 pixels plus the pixel pitch in micrometers."""

    data: np.ndarray
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"raster must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster values must be finite")
        if not (self.pixel_size > 0):
            raise ValueError(f"pixel_size must be > 0, got {self.pixel_size}")
        self.data = arr
        self.pixel_size = float(self.pixel_size)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class ImageMeta:
    """Acquisition metadata carried alongside a raster."""

    wavelength: float  # micrometers
    channel: ChannelTag = ChannelTag.PHASE
    shear: float = 0.0  # micrometers, lateral shear of the interferometer
    z_index: int = 0
    timestamp: float = 0.0  # seconds

    def __post_init__(self):
        if not (self.wavelength > 0):
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        self.channel = ChannelTag(self.channel)
        if self.channel == ChannelTag.PHASE and not (self.shear > 0):
            raise ValueError("phase channel requires shear > 0")


@dataclass
class Spectrum:
    """2-D DFT of a raster, complex64, same grid geometry as the source."""

    data: np.ndarray
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex64)
        if arr.ndim != 2:
            raise ValueError(f"spectrum must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.pixel_size = float(self.pixel_size)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def signed_freq_index(n: int) -> np.ndarray:
    """Signed DFT bin indices: i for i < n/2, i - n otherwise."""
    idx = np.arange(n, dtype=np.int64)
    half = (n + 1) // 2 if n % 2 else n // 2
    idx[idx >= half] -= n
    return idx


def angular_freq(n: int, pixel_size: float) -> np.ndarray:
    """Angular spatial frequencies (rad/um) for an n-sample axis."""
    return 2.0 * np.pi * signed_freq_index(n) / (n * pixel_size)


def dft2(r: Raster) -> Spectrum:
    """Unnormalized forward 2-D DFT. Computation runs in double precision."""
    return Spectrum(np.fft.fft2(r.data.astype(np.float64)), r.pixel_size)


def idft2(s: Spectrum, return_imag: bool = False):
    """Normalized inverse 2-D DFT, real part as a Raster.

    With return_imag=True also returns the imaginary residue as a float32
    array so callers can check how far the spectrum was from Hermitian.
    """
    out = np.fft.ifft2(s.data.astype(np.complex128))
    real = Raster(out.real.astype(np.float32), s.pixel_size)
    if return_imag:
        return real, out.imag.astype(np.float32)
    return real


def _check_dims(width: int, height: int):
    if width < 1 or height < 1 or width > MAX_DIM or height > MAX_DIM:
        raise DimensionError(f"bad raster dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise DimensionError(f"raster {width}x{height} exceeds {MAX_PIXELS} pixels")


def dumps_raster(raster: Raster, meta: ImageMeta) -> bytes:
    """Serialize one raster plus metadata to PICSR1 bytes."""
    _check_dims(raster.width, raster.height)
    header = PICSR1_MAGIC + struct.pack(
        _HEADER_FMT,
        raster.width,
        raster.height,
        raster.pixel_size,
        meta.wavelength,
        meta.shear,
        int(meta.channel),
        meta.z_index,
        meta.timestamp,
    )
    payload = np.ascontiguousarray(raster.data, dtype="<f4").tobytes()
    return header + payload


def loads_raster(blob: bytes) -> tuple[Raster, ImageMeta]:
    """Parse PICSR1 bytes back into a raster and its metadata."""
    if blob[: len(PICSR1_MAGIC)] != PICSR1_MAGIC:
        raise BadMagicError("not a PICSR1 stream")
    if len(blob) < _HEADER_SIZE:
        raise TruncatedPayloadError(
            f"header needs {_HEADER_SIZE} bytes, got {len(blob)}"
        )
    width, height, pixel_size, wavelength, shear, tag, z_index, timestamp = (
        struct.unpack_from(_HEADER_FMT, blob, len(PICSR1_MAGIC))
    )
    _check_dims(width, height)
    try:
        channel = ChannelTag(tag)
    except ValueError as exc:
        raise FormatError(f"unknown channel tag {tag}") from exc
    expected = _HEADER_SIZE + 4 * width * height
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"{width}x{height} needs {expected} bytes, got {len(blob)}"
        )
    pixels = np.frombuffer(blob, dtype="<f4", offset=_HEADER_SIZE)
    data = pixels.reshape(height, width).astype(np.float32)
    raster = Raster(data, pixel_size)
    meta = ImageMeta(
        wavelength=wavelength,
        channel=channel,
        shear=shear,
        z_index=z_index,
        timestamp=timestamp,
    )
    return raster, meta


def save_raster(path, raster: Raster, meta: ImageMeta) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_raster(raster, meta))


def load_raster(path) -> tuple[Raster, ImageMeta]:
    with open(path, "rb") as fh:
        return loads_raster(fh.read())
