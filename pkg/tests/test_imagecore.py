"""Fourier helpers against a brute-force DFT oracle, and PICSR1 format checks."""

import struct

import numpy as np
import pytest

from pics.imagecore import (
    MAX_DIM,
    PICSR1_MAGIC,
    BadMagicError,
    ChannelTag,
    DimensionError,
    FormatError,
    ImageMeta,
    Raster,
    Spectrum,
    TruncatedPayloadError,
    dft2,
    dumps_raster,
    idft2,
    load_raster,
    loads_raster,
    save_raster,
    signed_freq_index,
)

REL_TOL = 1e-6


def brute_dft2(a):
    """O(N^4) direct evaluation of the unnormalized forward DFT."""
    h, w = a.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for ky in range(h):
        for kx in range(w):
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    ang = -2.0 * np.pi * (ky * y / h + kx * x / w)
                    acc += a[y, x] * np.exp(1j * ang)
            out[ky, kx] = acc
    return out


def test_dft2_matches_bruteforce():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(6, 8)).astype(np.float32)
    got = dft2(Raster(a, 0.5)).data
    want = brute_dft2(a.astype(np.float64))
    assert np.abs(got - want).max() <= REL_TOL * np.abs(want).max()


def test_impulse_has_flat_spectrum():
    a = np.zeros((8, 8), dtype=np.float32)
    a[0, 0] = 1.0
    s = dft2(Raster(a, 1.0))
    assert np.allclose(s.data, 1.0, atol=1e-6)


def test_constant_concentrates_at_dc():
    c = 3.25
    s = dft2(Raster(np.full((4, 6), c, dtype=np.float32), 1.0))
    assert abs(s.data[0, 0] - c * 24) < 1e-4
    rest = s.data.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() < 1e-4


def test_dft2_linearity():
    rng = np.random.default_rng(3)
    for _ in range(5):
        f = rng.normal(size=(8, 8)).astype(np.float32)
        g = rng.normal(size=(8, 8)).astype(np.float32)
        a, b = rng.normal(size=2)
        lhs = dft2(Raster(a * f + b * g, 1.0)).data
        rhs = a * dft2(Raster(f, 1.0)).data + b * dft2(Raster(g, 1.0)).data
        assert np.abs(lhs - rhs).max() <= 1e-5 * max(1.0, np.abs(rhs).max())


def test_parseval():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(16, 16)).astype(np.float32)
    s = dft2(Raster(a, 1.0))
    space = float((a.astype(np.float64) ** 2).sum())
    freq = float((np.abs(s.data.astype(np.complex128)) ** 2).sum()) / a.size
    assert abs(space - freq) <= REL_TOL * space


def test_round_trip_inverse():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(12, 10)).astype(np.float32)
    r = Raster(a, 0.25)
    back = idft2(dft2(r))
    assert back.pixel_size == r.pixel_size
    assert np.abs(back.data - a).max() <= REL_TOL * np.abs(a).max()


def test_idft2_reports_imaginary_residue():
    # deliberately non-Hermitian spectrum: nonzero residue must surface
    spec = np.zeros((4, 4), dtype=np.complex64)
    spec[1, 1] = 1.0 + 0.0j
    real, imag = idft2(Spectrum(spec, 1.0), return_imag=True)
    assert np.abs(imag).max() > 1e-3
    # Hermitian input: residue at float noise
    rng = np.random.default_rng(9)
    a = rng.normal(size=(8, 8)).astype(np.float32)
    _, resid = idft2(dft2(Raster(a, 1.0)), return_imag=True)
    assert np.abs(resid).max() < 1e-5


def test_signed_freq_index():
    assert signed_freq_index(4).tolist() == [0, 1, -2, -1]
    assert signed_freq_index(5).tolist() == [0, 1, 2, -2, -1]
    assert signed_freq_index(1).tolist() == [0]


def test_raster_validation():
    with pytest.raises(ValueError):
        Raster(np.zeros((0, 4), dtype=np.float32), 1.0)
    with pytest.raises(ValueError):
        Raster(np.array([[np.nan, 0.0]], dtype=np.float32), 1.0)
    with pytest.raises(ValueError):
        Raster(np.zeros((2, 2), dtype=np.float32), 0.0)
    with pytest.raises(ValueError):
        Raster(np.zeros(4, dtype=np.float32), 1.0)


def test_meta_validation():
    with pytest.raises(ValueError):
        ImageMeta(wavelength=0.0, channel=ChannelTag.DAPI)
    # phase channel needs a positive shear
    with pytest.raises(ValueError):
        ImageMeta(wavelength=0.78, channel=ChannelTag.PHASE, shear=0.0)
    m = ImageMeta(wavelength=0.78, channel=ChannelTag.DAPI)
    assert m.shear == 0.0


def _sample():
    data = np.arange(6, dtype=np.float32).reshape(2, 3) / 7.0
    raster = Raster(data, 0.25)
    meta = ImageMeta(
        wavelength=0.78, channel=ChannelTag.PHASE, shear=0.3,
        z_index=-2, timestamp=12.5,
    )
    return raster, meta


def test_picsr1_golden_bytes():
    raster, meta = _sample()
    want = PICSR1_MAGIC + struct.pack(
        "<IIfffBid", 3, 2, 0.25, 0.78, 0.3, 0, -2, 12.5
    ) + raster.data.astype("<f4").tobytes()
    assert dumps_raster(raster, meta) == want


def test_picsr1_round_trip_bit_exact(tmp_path):
    raster, meta = _sample()
    path = tmp_path / "a.picsr1"
    save_raster(path, raster, meta)
    back, meta2 = load_raster(path)
    assert back.data.tobytes() == raster.data.tobytes()
    assert back.pixel_size == np.float32(0.25)
    assert meta2.channel == ChannelTag.PHASE
    assert meta2.z_index == -2
    assert meta2.timestamp == 12.5
    assert meta2.wavelength == np.float32(0.78)


def test_picsr1_bad_magic():
    with pytest.raises(BadMagicError):
        loads_raster(b"NOTPIC" + b"\x00" * 64)
    with pytest.raises(BadMagicError):
        loads_raster(b"PIC")


def test_picsr1_truncated_payload():
    raster, meta = _sample()
    blob = dumps_raster(raster, meta)
    with pytest.raises(TruncatedPayloadError):
        loads_raster(blob[:-4])
    # header declaring 10x10 but only 50 floats behind it
    header = PICSR1_MAGIC + struct.pack(
        "<IIfffBid", 10, 10, 1.0, 0.78, 0.0, 1, 0, 0.0
    )
    with pytest.raises(TruncatedPayloadError):
        loads_raster(header + b"\x00" * (4 * 50))
    with pytest.raises(TruncatedPayloadError):
        loads_raster(header[: len(header) - 8])


def test_picsr1_dimension_overflow():
    header = PICSR1_MAGIC + struct.pack(
        "<IIfffBid", MAX_DIM + 1, 1, 1.0, 0.78, 0.0, 1, 0, 0.0
    )
    with pytest.raises(DimensionError):
        loads_raster(header)
    header = PICSR1_MAGIC + struct.pack(
        "<IIfffBid", 0, 4, 1.0, 0.78, 0.0, 1, 0, 0.0
    )
    with pytest.raises(DimensionError):
        loads_raster(header)


def test_picsr1_unknown_channel_tag():
    header = PICSR1_MAGIC + struct.pack(
        "<IIfffBid", 1, 1, 1.0, 0.78, 0.0, 99, 0, 0.0
    )
    with pytest.raises(FormatError):
        loads_raster(header + b"\x00" * 4)
