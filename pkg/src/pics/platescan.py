"""Multi-well scan planning: focus surfaces, tile order, focus scoring.

A handful of surveyed focus points per plate becomes a continuous z
surface; tiles are visited in a serpentine to keep stage travel short;
a wavelet contrast score ranks slices within each z stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .qpi_recon import FRAME_COUNT as PHASE_FRAME_COUNT


class FocusPoint(NamedTuple):
    """Surveyed best-focus position: stage x, y and focus z, all in um."""

    x: float
    y: float
    z: float


class FocusSurface:
    """Piecewise-linear focus height over the plate.

    Inside the survey hull, queries interpolate the containing triangle.
    Outside, the plane of the nearest triangle (by centroid) extends the
    surface, so a tilted-but-flat plate extrapolates exactly.
    """

    def __init__(self, points: Sequence[FocusPoint]):
        pts = np.asarray([(p[0], p[1], p[2]) for p in points], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 3:
            raise ValueError("need at least three focus points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("focus points must be finite")
        try:
            self._tri = Delaunay(pts[:, :2])
        except QhullError as exc:
            raise ValueError(
                "focus points are collinear or coincident; they must span "
                "the plate in two dimensions"
            ) from exc
        self._z = pts[:, 2]
        self._centroids = pts[self._tri.simplices, :2].mean(axis=1)

    def z_at(self, xy) -> np.ndarray:
        """Focus height for an (n, 2) array of stage positions."""
        q = np.asarray(xy, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 2:
            raise ValueError("expected an (n, 2) array of positions")
        simplex = self._tri.find_simplex(q)
        outside = simplex < 0
        if outside.any():
            d2 = ((q[outside, None, :] - self._centroids[None, :, :]) ** 2).sum(-1)
            simplex[outside] = np.argmin(d2, axis=1)
        # barycentric weights; negative weights outside a triangle trace
        # out its plane, which is exactly the extension we want
        trans = self._tri.transform[simplex]
        lam12 = np.einsum("nij,nj->ni", trans[:, :2, :], q - trans[:, 2, :])
        lam = np.column_stack([lam12, 1.0 - lam12.sum(axis=1)])
        verts = self._tri.simplices[simplex]
        return (self._z[verts] * lam).sum(axis=1)

    def __call__(self, x: float, y: float) -> float:
        return float(self.z_at(np.array([[x, y]]))[0])


CHANNEL_KINDS = ("phase", "fluorescence")


class ChannelSpec(NamedTuple):
    """One acquisition channel and its per-frame costs."""

    name: str
    kind: str  # "phase" needs 4 modulation frames, "fluorescence" one
    exposure_ms: float
    stabilization_ms: float

    def frames(self) -> int:
        return PHASE_FRAME_COUNT if self.kind == "phase" else 1


class WellRegion(NamedTuple):
    """A well's mosaic origin on the stage, in micrometers."""

    name: str
    x_um: float
    y_um: float


class ScanEvent(NamedTuple):
    """One camera trigger: where the stage sits and what fires."""

    well: str
    tile_row: int
    tile_col: int
    x_um: float
    y_um: float
    z_um: float
    channel: str
    pattern_index: int
    exposure_ms: float
    stabilization_ms: float


@dataclass(frozen=True)
class ScanPlan:
    """A deterministic pass over every well, tile, z level, and channel.

    Tiles step by tile_pitch_um inside each well; the pitch may not
    exceed the field of view, so mosaics never leave gaps.  Stage moves
    are outermost and each channel's modulation frames stay contiguous,
    keeping slow stage and modulator settling off the critical path.
    """

    wells: tuple[WellRegion, ...]
    tile_rows: int
    tile_cols: int
    tile_pitch_um: float
    field_of_view_um: float
    z_count: int
    z_step_um: float
    channels: tuple[ChannelSpec, ...]

    def __post_init__(self):
        if not self.wells:
            raise ValueError("need at least one well")
        names = [w.name for w in self.wells]
        if len(set(names)) != len(names):
            raise ValueError("well names must be unique")
        for label, val in (
            ("tile rows", self.tile_rows),
            ("tile cols", self.tile_cols),
            ("z count", self.z_count),
        ):
            if val < 1:
                raise ValueError(f"{label} must be at least 1, got {val}")
        if not 0 < self.tile_pitch_um <= self.field_of_view_um:
            raise ValueError(
                f"tile pitch {self.tile_pitch_um} must be positive and not "
                f"exceed the {self.field_of_view_um} um field of view"
            )
        if self.z_count > 1 and not self.z_step_um > 0:
            raise ValueError("z step must be positive for a z stack")
        if not self.channels:
            raise ValueError("need at least one channel")
        for ch in self.channels:
            if ch.kind not in CHANNEL_KINDS:
                raise ValueError(f"unknown channel kind {ch.kind!r}")
            if ch.exposure_ms < 0 or ch.stabilization_ms < 0:
                raise ValueError("channel timings must be non-negative")

    def tiles_per_well(self) -> int:
        return self.tile_rows * self.tile_cols

    def frames_per_position(self) -> int:
        return sum(ch.frames() for ch in self.channels)

    def event_count(self) -> int:
        return (
            len(self.wells)
            * self.tiles_per_well()
            * self.z_count
            * self.frames_per_position()
        )

    def phase_image_count(self, time_points: int = 1) -> int:
        """Phase images produced over a repeated time-lapse of this plan."""
        if time_points < 1:
            raise ValueError("time points must be at least 1")
        n_phase = sum(1 for ch in self.channels if ch.kind == "phase")
        return (
            len(self.wells)
            * self.tiles_per_well()
            * self.z_count
            * n_phase
            * time_points
        )

    def tile_order(self) -> list[tuple[int, int]]:
        """Serpentine mosaic order: alternate rows reverse direction."""
        order = []
        for row in range(self.tile_rows):
            cols = range(self.tile_cols)
            if row % 2:
                cols = reversed(cols)
            order.extend((row, col) for col in cols)
        return order

    def events(self, focus: FocusSurface | None = None) -> Iterator[ScanEvent]:
        """Every camera trigger of one plate pass, in acquisition order.

        The z stack centers on the focus surface when one is given,
        otherwise on z = 0.
        """
        z_mid = (self.z_count - 1) / 2.0
        for well in self.wells:
            for row, col in self.tile_order():
                x = well.x_um + col * self.tile_pitch_um
                y = well.y_um + row * self.tile_pitch_um
                z_base = focus(x, y) if focus is not None else 0.0
                for zi in range(self.z_count):
                    z = z_base + (zi - z_mid) * self.z_step_um
                    for ch in self.channels:
                        for pattern in range(ch.frames()):
                            yield ScanEvent(
                                well.name, row, col, x, y, z,
                                ch.name, pattern,
                                ch.exposure_ms, ch.stabilization_ms,
                            )


def haar_focus_metric(image) -> float:
    """Contrast score from a one-level wavelet split.

    The ratio of detail energy to coarse energy peaks at best focus and
    is insensitive to overall brightness.  Odd trailing rows or columns
    are trimmed.  A featureless image scores zero.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2d image, got {img.ndim}d")
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    if h == 0 or w == 0:
        raise ValueError("image too small for a wavelet split")
    blocks = img[:h, :w].reshape(h // 2, 2, w // 2, 2)
    p00 = blocks[:, 0, :, 0]
    p01 = blocks[:, 0, :, 1]
    p10 = blocks[:, 1, :, 0]
    p11 = blocks[:, 1, :, 1]
    approx = (p00 + p01 + p10 + p11) / 4.0
    horiz = (p00 + p01 - p10 - p11) / 4.0
    vert = (p00 - p01 + p10 - p11) / 4.0
    diag = (p00 - p01 - p10 + p11) / 4.0
    detail = (np.abs(horiz).mean() + np.abs(vert).mean() + np.abs(diag).mean()) / 3.0
    coarse = np.abs(approx).mean()
    if coarse == 0.0:
        return 0.0
    return float(detail / coarse)


def select_in_focus(scores, keep: int = 3) -> list[int]:
    """Indices of the best-scoring slices, returned in index order.

    Ties break toward the earlier slice so repeated runs pick the same
    planes.
    """
    vals = np.asarray(scores, dtype=np.float64)
    if vals.ndim != 1:
        raise ValueError("scores must be 1d")
    if not np.all(np.isfinite(vals)):
        raise ValueError("scores must be finite")
    if not 0 <= keep <= vals.size:
        raise ValueError(f"cannot keep {keep} of {vals.size} slices")
    ranked = sorted(range(vals.size), key=lambda i: (-vals[i], i))
    return sorted(ranked[:keep])
