"""Dry-mass growth curves over long acquisitions.

Per-position mass traces get normalized against their early baseline,
pooled across positions, and reduced to doubling times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BASELINE_WINDOW_H = 6.0


@dataclass(frozen=True)
class MassSeries:
    """One field of view's dry mass sampled over time (hours, picograms)."""

    times_h: np.ndarray
    mass_pg: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        t = np.asarray(self.times_h, dtype=np.float64)
        m = np.asarray(self.mass_pg, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty 1d array")
        if m.shape != t.shape:
            raise ValueError(f"length mismatch: {t.size} times, {m.size} masses")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m))):
            raise ValueError("times and masses must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times_h", t)
        object.__setattr__(self, "mass_pg", m)

    def __len__(self):
        return self.times_h.size


def normalize_series(
    series: MassSeries, window_h: float = BASELINE_WINDOW_H
) -> MassSeries:
    """Divide a trace by its mean over the opening baseline window.

    Positions seeded with different cell counts become comparable once
    each is expressed relative to its own early mass.  The window is
    measured from each trace's own first sample.
    """
    if not window_h >= 0:
        raise ValueError(f"window must be non-negative, got {window_h}")
    t0 = series.times_h[0]
    sel = series.times_h <= t0 + window_h
    if int(sel.sum()) < 2:
        raise ValueError(
            f"need at least two samples in the {window_h} h baseline window"
        )
    baseline = float(series.mass_pg[sel].mean())
    if not baseline > 0:
        raise ValueError("baseline mass must be positive to normalize")
    return MassSeries(series.times_h, series.mass_pg / baseline, series.label)


MIN_FIT_SAMPLES = 4


def doubling_time(
    series: MassSeries, t_range: tuple[float, float] | None = None
) -> tuple[float, float]:
    """Fit exponential growth, returning (doubling time in hours, r squared).

    A least-squares line through log2(mass) gives doublings per hour as
    its slope.  A t_range restricts the fit, e.g. to skip a lag phase.
    Flat or shrinking traces have no doubling time and come back as
    infinity, with the r squared still describing the fit.
    """
    t, m = series.times_h, series.mass_pg
    if t_range is not None:
        lo, hi = t_range
        sel = (t >= lo) & (t <= hi)
        t, m = t[sel], m[sel]
    if t.size < MIN_FIT_SAMPLES:
        raise ValueError(
            f"need at least {MIN_FIT_SAMPLES} samples in range, got {t.size}"
        )
    if not np.all(m > 0):
        raise ValueError("masses must be positive to fit in log space")
    y = np.log2(m)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    # flat traces leave only rounding residue in both sums and the
    # slope; anything below these floors is noise, not growth
    scale = max(1.0, float(np.abs(y).max()))
    if ss_tot <= 1e-20 * y.size * scale**2:
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    span = float(t[-1] - t[0])
    td = 1.0 / slope if slope * span > 1e-12 * scale else math.inf
    return float(td), float(r2)


def _nearest_sample(
    times: np.ndarray, values: np.ndarray, query: np.ndarray, tol_h: float
):
    idx = np.searchsorted(times, query)
    lo = np.clip(idx - 1, 0, times.size - 1)
    hi = np.clip(idx, 0, times.size - 1)
    # ties between neighbors resolve to the earlier sample
    pick = np.where(np.abs(query - times[lo]) <= np.abs(times[hi] - query), lo, hi)
    gap = np.abs(times[pick] - query)
    if gap.max(initial=0.0) > tol_h:
        raise ValueError(
            "series does not overlap the time grid: nearest sample is "
            f"{gap.max():.3g} h away (limit {tol_h:.3g} h)"
        )
    return values[pick]


def median_across_fovs(
    series_list: list[MassSeries], grid_times_h: np.ndarray | None = None
) -> MassSeries:
    """Pool positions into one median trace.

    Each position contributes its nearest sample to every grid time, so
    slightly staggered acquisition clocks still line up.  A position
    whose nearest sample sits more than half a grid interval away does
    not overlap the grid and is rejected.  The grid defaults to the
    first position's times.
    """
    if not series_list:
        raise ValueError("need at least one series")
    if grid_times_h is None:
        grid = series_list[0].times_h
    else:
        grid = np.asarray(grid_times_h, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1d array")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid times must be strictly increasing")
    tol = 0.5 * float(np.median(np.diff(grid))) if grid.size > 1 else math.inf
    stack = np.stack(
        [_nearest_sample(s.times_h, s.mass_pg, grid, tol) for s in series_list]
    )
    return MassSeries(grid, np.median(stack, axis=0), label="median")


def nuclear_cytoplasmic_ratio(
    nucleus_pg, cytoplasm_pg
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample nucleus/cytoplasm mass ratio.

    Returns (ratio, excluded).  Samples without measurable cytoplasm
    cannot form a ratio; they come back NaN with the exclusion flag set
    rather than polluting downstream statistics with infinities.
    """
    nuc = np.asarray(nucleus_pg, dtype=np.float64)
    cyt = np.asarray(cytoplasm_pg, dtype=np.float64)
    if nuc.shape != cyt.shape:
        raise ValueError(f"shape mismatch: {nuc.shape} vs {cyt.shape}")
    if not (np.all(np.isfinite(nuc)) and np.all(np.isfinite(cyt))):
        raise ValueError("masses must be finite")
    excluded = cyt <= 0
    ratio = np.full(nuc.shape, np.nan)
    np.divide(nuc, cyt, out=ratio, where=~excluded)
    return ratio, excluded


def confluence(mask) -> float:
    """Fraction of the field covered by foreground."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("expected a non-empty 2d mask")
    return float(m.mean())
