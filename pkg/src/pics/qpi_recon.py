"""Interferometric phase reconstruction for shear-based phase microscopy.

The instrument modulates the relative phase between a shifted replica and
the image field in four steps of pi/2 and records one intensity frame per
step. With equal arm intensities I the model per pixel is

    I_n = 2*I + 2*I*cos(dphi_x + eps0 + n*pi/2),  n = 0..3

where dphi_x is the phase difference across the lateral shear, about
(dphi/dx) * shear for shears below the diffraction spot. Retrieval is the
four-quadrant arctangent of the frame differences; integration back to
phase runs in the frequency domain along the shear axis.

The integration filter divides out the derivative kernel i*k_x. In sgn
form it is written -1j*sign(k_x) / (|k_x| * shear) with the k_x = 0 column
zeroed: the mean of every image row lies in the null space of d/dx and
cannot be recovered. Wiener form replaces 1/|k_x| with 1/(|k_x| + l_reg),
trading low-frequency fidelity for noise damping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import Raster, Spectrum, angular_freq, dft2, idft2

# four-step modulation, radians
PHASE_STEP = np.pi / 2
FRAME_COUNT = 4

# system defaults, micrometers
DEFAULT_WAVELENGTH_UM = 0.780
DEFAULT_SHEAR_UM = 0.300

# wiener regularization default, fraction of the Nyquist angular frequency
DEFAULT_LREG_NYQUIST_FRACTION = 1e-3

# immersion bead used for calibration
BEAD_DIAMETER_UM = 3.0
BEAD_INDEX = 1.579
MEDIA_INDEX = 1.518


@dataclass
class FrameSet:
    """Four phase-shifted intensity frames, shape (4, H, W)."""

    frames: np.ndarray
    pixel_size: float  # micrometers
    shear: float  # micrometers
    eps0: float = 0.0  # common modulation bias, radians

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != FRAME_COUNT:
            raise ValueError(f"expected (4, H, W) frames, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame intensities must be finite")
        if arr.min() < 0:
            raise ValueError("frame intensities must be >= 0")
        if not (self.pixel_size > 0) or not (self.shear > 0):
            raise ValueError("pixel_size and shear must be > 0")
        self.frames = arr


@dataclass
class GradientImage:
    """Retrieved phase difference across the shear, radians in (-pi, pi].

    quality is an optional boolean map, False where the modulation depth
    vanished and the retrieval defaulted to zero.
    """

    raster: Raster
    shear: float  # micrometers
    quality: np.ndarray | None = None

    def __post_init__(self):
        if not (self.shear > 0):
            raise ValueError("shear must be > 0")
        d = self.raster.data
        if d.min() <= -np.pi or d.max() > np.pi:
            raise ValueError("gradient values must lie in (-pi, pi]")
        if self.quality is not None:
            q = np.asarray(self.quality, dtype=bool)
            if q.shape != d.shape:
                raise ValueError("quality mask shape must match the raster")
            self.quality = q


@dataclass
class PhaseImage:
    """Integrated phase map in radians."""

    raster: Raster
    wavelength: float = DEFAULT_WAVELENGTH_UM  # micrometers

    def __post_init__(self):
        if not (self.wavelength > 0):
            raise ValueError("wavelength must be > 0")


def _forward_diff_x(data: np.ndarray) -> np.ndarray:
    """Forward difference along x; the last column repeats its neighbor."""
    out = np.empty_like(data, dtype=np.float64)
    out[:, :-1] = np.diff(data.astype(np.float64), axis=1)
    out[:, -1] = out[:, -2] if data.shape[1] > 1 else 0.0
    return out


def simulate_glim_frames(
    phase: PhaseImage,
    background=1.0,
    shear: float = DEFAULT_SHEAR_UM,
    eps0: float = 0.0,
) -> FrameSet:
    """Render the four modulation frames for a known phase map.

    background is the per-arm intensity, scalar or Raster; both arms carry
    the same background (matched-arm operation), so the frame model is
    2*B*(1 + cos(dphi_x + eps0 + n*pi/2)). dphi_x is the forward
    difference of phase along x over pixel_size, scaled by the shear.
    """
    if isinstance(background, Raster):
        if background.data.shape != phase.raster.data.shape:
            raise ValueError("background shape must match the phase raster")
        b = background.data.astype(np.float64)
    else:
        b = float(background)
        if b < 0:
            raise ValueError("background must be >= 0")
    if not (shear > 0):
        raise ValueError("shear must be > 0")
    px = phase.raster.pixel_size
    dphi = _forward_diff_x(phase.raster.data) / px * shear
    steps = eps0 + PHASE_STEP * np.arange(FRAME_COUNT)
    frames = np.stack(
        [2.0 * b * (1.0 + np.cos(dphi + s)) for s in steps]
    )
    # cosine roundoff can dip a hair under -1; the model is non-negative
    np.clip(frames, 0.0, None, out=frames)
    return FrameSet(frames.astype(np.float32), px, shear, eps0)


def retrieve_gradient(fs: FrameSet) -> GradientImage:
    """Four-quadrant retrieval dphi_x = atan2(I3 - I1, I0 - I2).

    Requires eps0 == 0; a biased modulation would alias into the phase.
    Pixels with vanishing modulation depth retrieve 0 and are marked False
    in the quality mask.
    """
    if fs.eps0 != 0.0:
        raise ValueError("retrieval assumes unbiased modulation (eps0 == 0)")
    f = fs.frames.astype(np.float64)
    num = f[3] - f[1]
    den = f[0] - f[2]
    dphi = np.arctan2(num, den)
    # atan2 can return exactly -pi; fold onto the (-pi, pi] convention
    dphi[dphi == -np.pi] = np.pi
    depth = np.hypot(num, den)
    scale = max(float(f.max()), 1.0)
    quality = depth > 1e-7 * scale
    raster = Raster(dphi.astype(np.float32), fs.pixel_size)
    return GradientImage(raster=raster, shear=fs.shear, quality=quality)


def _integration_filter(
    width: int, pixel_size: float, shear: float, mode: str, l_reg: float | None
) -> np.ndarray:
    kx = angular_freq(width, pixel_size)  # rad/um, signed
    if mode == "sgn":
        with np.errstate(divide="ignore", invalid="ignore"):
            filt = -1j * np.sign(kx) / (np.abs(kx) * shear)
        filt[kx == 0] = 0.0  # unrecoverable row means
        return filt
    if mode == "wiener":
        if l_reg is None:
            l_reg = DEFAULT_LREG_NYQUIST_FRACTION * np.pi / pixel_size
        if not (l_reg > 0):
            raise ValueError("wiener mode requires l_reg > 0")
        return -1j * np.sign(kx) / ((np.abs(kx) + l_reg) * shear)
    raise ValueError(f"unknown integration mode {mode!r}")


def integrate_hilbert(
    g: GradientImage,
    mode: str = "sgn",
    l_reg: float | None = None,
    wavelength: float = DEFAULT_WAVELENGTH_UM,
) -> PhaseImage:
    """Integrate the shear difference back to phase in the frequency domain.

    Multiplies the spectrum by -1j*sign(k_x)/(|k_x|*shear) (sgn mode) or
    the l_reg-regularized variant (wiener mode) and returns the real part
    of the inverse transform. Row means are zeroed by construction.
    """
    filt = _integration_filter(
        g.raster.width, g.raster.pixel_size, g.shear, mode, l_reg
    )
    spec = dft2(g.raster)
    shaped = Spectrum(spec.data * filt[None, :], spec.pixel_size)
    out = idft2(shaped)
    return PhaseImage(raster=out, wavelength=wavelength)


def make_bead_phantom(
    size: int = 512,
    pixel_size: float = 0.05,
    diameter: float = BEAD_DIAMETER_UM,
    wavelength: float = DEFAULT_WAVELENGTH_UM,
    n_bead: float = BEAD_INDEX,
    n_media: float = MEDIA_INDEX,
) -> PhaseImage:
    """Spherical bead phase map, peak 2*pi/lambda * (n_bead - n_media) * d.

    The bead center sits on the pixel at index size // 2 so the analytic
    peak is sampled exactly. Thickness follows the spherical cap profile
    t(r) = 2*sqrt((d/2)^2 - r^2).
    """
    if size < 1 or not (pixel_size > 0) or not (diameter > 0):
        raise ValueError("size, pixel_size and diameter must be positive")
    if not (wavelength > 0):
        raise ValueError("wavelength must be > 0")
    c = (size // 2) * pixel_size
    coords = np.arange(size, dtype=np.float64) * pixel_size
    xx = coords[None, :] - c
    yy = coords[:, None] - c
    r2 = xx * xx + yy * yy
    radius = diameter / 2.0
    thickness = 2.0 * np.sqrt(np.maximum(radius * radius - r2, 0.0))
    phi = (2.0 * np.pi / wavelength) * (n_bead - n_media) * thickness
    return PhaseImage(
        raster=Raster(phi.astype(np.float32), pixel_size), wavelength=wavelength
    )


def bead_peak_phase(
    diameter: float = BEAD_DIAMETER_UM,
    wavelength: float = DEFAULT_WAVELENGTH_UM,
    n_bead: float = BEAD_INDEX,
    n_media: float = MEDIA_INDEX,
) -> float:
    """Closed-form peak phase of the calibration bead, radians."""
    return 2.0 * np.pi / wavelength * (n_bead - n_media) * diameter
