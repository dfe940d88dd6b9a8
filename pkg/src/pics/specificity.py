"""Label maps and dry-mass readouts from phase and stain images.

Turns continuous stain predictions into masks, splits touching cells,
and integrates phase into picograms of non-aqueous cell content.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imagecore import Raster

# ml/g for the protein-dominated refractive increment; equivalently
# um^3/pg when lengths are in microns and mass in picograms.
SPECIFIC_REFRACTION_INCREMENT = 0.2

SEMANTIC_BACKGROUND = 0
SEMANTIC_CYTOPLASM = 128
SEMANTIC_NUCLEUS = 255

DEFAULT_THRESHOLD_BINS = 256
SMOOTH_WINDOW = 5
# peaks in the distance transform must rise this many pixels above the
# saddle to count as separate cell centers
DEFAULT_SPLIT_DEPTH = 2.0
D2_NOISE_FLOOR = 1e-6


def inflection_threshold(values, bins: int = DEFAULT_THRESHOLD_BINS) -> float:
    """Pick a foreground threshold from the cumulative histogram shape.

    The normalized cumulative of a stained image rises steeply through
    the background population, flattens, then rises again through the
    stained pixels.  The threshold is the midpoint between the end of
    the first rise (most negative second difference) and the onset of
    the second (most positive one above it).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no samples to threshold")
    if not np.all(np.isfinite(v)):
        raise ValueError("samples must be finite")
    if bins < 8:
        raise ValueError(f"need at least 8 bins, got {bins}")
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        raise ValueError("constant input has no threshold")

    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    cum = np.cumsum(hist) / v.size
    half = SMOOTH_WINDOW // 2
    # edge replication keeps the padded cumulative monotone; zero
    # padding would fake a droop at both ends
    padded = np.pad(cum, half, mode="edge")
    kernel = np.full(SMOOTH_WINDOW, 1.0 / SMOOTH_WINDOW)
    smooth = np.convolve(padded, kernel, mode="valid")

    d2 = np.zeros_like(smooth)
    d2[1:-1] = smooth[2:] - 2.0 * smooth[1:-1] + smooth[:-2]
    peak = np.abs(d2).max()
    if peak > 0.0:
        d2[np.abs(d2) < D2_NOISE_FLOOR * peak] = 0.0

    centers = 0.5 * (edges[:-1] + edges[1:])
    i_bg = int(np.argmin(d2)) if np.any(d2 < 0.0) else 0
    rest = d2[i_bg + 1 :]
    if rest.size and np.any(rest > 0.0):
        i_fg = i_bg + 1 + int(np.argmax(rest))
    else:
        i_fg = bins - 1
    return float(0.5 * (centers[i_bg] + centers[i_fg]))


def binarize(raster: Raster, threshold: float) -> np.ndarray:
    """Boolean foreground mask: pixels strictly above the threshold."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return raster.data > np.float32(threshold)


def compose_semantic(
    nucleus_mask: np.ndarray, cytoplasm_mask: np.ndarray
) -> np.ndarray:
    """Merge per-channel masks into one uint8 class image.

    Nucleus wins where both masks claim a pixel; cytoplasm covers the
    rest of its mask; everything else is background.
    """
    nuc = np.asarray(nucleus_mask, dtype=bool)
    cyt = np.asarray(cytoplasm_mask, dtype=bool)
    if nuc.shape != cyt.shape:
        raise ValueError(f"mask shapes differ: {nuc.shape} vs {cyt.shape}")
    out = np.full(nuc.shape, SEMANTIC_BACKGROUND, dtype=np.uint8)
    out[cyt & ~nuc] = SEMANTIC_CYTOPLASM
    out[nuc] = SEMANTIC_NUCLEUS
    return out


def subtract_background(raster: Raster, foreground_mask: np.ndarray) -> Raster:
    """Remove the mean background level so empty regions integrate to zero."""
    mask = np.asarray(foreground_mask, dtype=bool)
    if mask.shape != raster.data.shape:
        raise ValueError("mask shape must match the raster")
    bg = ~mask
    if not bg.any():
        raise ValueError("no background pixels to estimate the level from")
    level = float(raster.data[bg].mean(dtype=np.float64))
    return Raster(raster.data - np.float32(level), raster.pixel_size)


def dry_mass_pg(
    raster: Raster, wavelength_um: float, mask: np.ndarray | None = None
) -> float:
    """Integrate phase into picograms of dry content.

    Phase in radians, pixel size and wavelength in microns.  With the
    0.2 ml/g refraction increment the scale factor comes out directly
    in picograms.
    """
    if not wavelength_um > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_um}")
    data = raster.data.astype(np.float64)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != data.shape:
            raise ValueError("mask shape must match the raster")
        total_phase = float(data[m].sum())
    else:
        total_phase = float(data.sum())
    pixel_area = raster.pixel_size**2
    scale = wavelength_um / (2.0 * np.pi * SPECIFIC_REFRACTION_INCREMENT)
    return scale * total_phase * pixel_area


def split_instances(
    mask: np.ndarray,
    split_depth: float = DEFAULT_SPLIT_DEPTH,
    min_area_px: int = 0,
) -> tuple[np.ndarray, int]:
    """Separate touching objects in a binary mask.

    Floods the negated distance transform from its prominent peaks, so
    two fused convex blobs part along the saddle between them.  Every
    connected component keeps at least one seed: objects too shallow to
    have a prominent peak survive as single instances.  Returns an
    int32 label image (0 = background, instances numbered 1..count in
    raster-scan order of first appearance) and the count.
    """
    from skimage.morphology import h_maxima
    from skimage.segmentation import watershed

    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError(f"expected a 2d mask, got {m.ndim}d")
    if not split_depth > 0:
        raise ValueError(f"split depth must be positive, got {split_depth}")
    if not m.any():
        return np.zeros(m.shape, dtype=np.int32), 0

    edt = ndimage.distance_transform_edt(m)
    peaks = h_maxima(edt, split_depth).astype(bool)

    comp, ncomp = ndimage.label(m)
    has_peak = np.zeros(ncomp + 1, dtype=bool)
    has_peak[np.unique(comp[peaks])] = True
    orphans = [i for i in range(1, ncomp + 1) if not has_peak[i]]
    if orphans:
        # seed shallow components at their deepest pixel
        for pos in ndimage.maximum_position(edt, labels=comp, index=orphans):
            peaks[pos] = True

    markers, _ = ndimage.label(peaks)
    labels = watershed(-edt, markers, mask=m, connectivity=1)

    if min_area_px > 0:
        areas = np.bincount(labels.ravel())
        small = np.flatnonzero(areas < min_area_px)
        labels[np.isin(labels, small[small > 0])] = 0

    return _relabel_raster_order(labels)


def _relabel_raster_order(labels: np.ndarray) -> tuple[np.ndarray, int]:
    flat = labels.ravel()
    nz = flat[flat > 0]
    if nz.size == 0:
        return np.zeros(labels.shape, dtype=np.int32), 0
    _, first = np.unique(nz, return_index=True)
    order = nz[np.sort(first)]
    remap = np.zeros(int(flat.max()) + 1, dtype=np.int32)
    remap[order] = np.arange(1, order.size + 1, dtype=np.int32)
    return remap[labels], int(order.size)


# --- mask files ---------------------------------------------------------
#
# Binary PGM (P5): 8-bit for class images, 16-bit big-endian for
# instance labels.


def save_mask_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a non-empty 2d image")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype in (np.uint16, np.int32):
        as16 = img.astype(np.uint16)
        if img.dtype == np.int32 and (img.max() > 65535 or img.min() < 0):
            raise ValueError("labels exceed the 16-bit file range")
        maxval, payload = 65535, as16.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported dtype {img.dtype}")
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + payload)


def load_mask_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise ValueError("truncated PGM header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if w <= 0 or h <= 0:
        raise ValueError(f"bad PGM dimensions {w}x{h}")
    if maxval == 255:
        dtype, itemsize = np.uint8, 1
    elif maxval == 65535:
        dtype, itemsize = np.dtype(">u2"), 2
    else:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    need = w * h * itemsize
    data = blob[pos : pos + need]
    if len(data) != need:
        raise ValueError("PGM payload shorter than the header promises")
    img = np.frombuffer(data, dtype=dtype).reshape(h, w)
    return img.astype(np.uint16) if itemsize == 2 else img.copy()
