"""Agreement metrics between computed and reference stain images.

Pixel correlation over whole datasets, mask-based dry-mass agreement,
contrast diagnostics, and reproducible fold assignment for validation
experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .imagecore import Raster
from .qpi_recon import DEFAULT_WAVELENGTH_UM
from .specificity import dry_mass_pg, inflection_threshold

SPLIT_TAGS = ("train", "validation", "test")


class PairRecord(NamedTuple):
    """One phase/stain image pair on disk."""

    phase_path: str
    stain_path: str
    fov: str
    z: int


@dataclass(frozen=True)
class PairSet:
    """Records assigned to one split of an experiment."""

    records: tuple[PairRecord, ...]
    split: str

    def __post_init__(self):
        if self.split not in SPLIT_TAGS:
            raise ValueError(
                f"split must be one of {SPLIT_TAGS}, got {self.split!r}"
            )
        object.__setattr__(self, "records", tuple(self.records))

    def fovs(self) -> set[str]:
        return {r.fov for r in self.records}

    def __len__(self):
        return len(self.records)


def ensure_disjoint_fovs(sets: Sequence[PairSet]) -> None:
    """Reject split assignments that leak a field of view across splits."""
    seen: dict[str, str] = {}
    for ps in sets:
        for fov in ps.fovs():
            if fov in seen and seen[fov] != ps.split:
                raise ValueError(
                    f"fov {fov!r} appears in both {seen[fov]!r} and "
                    f"{ps.split!r} splits"
                )
            seen.setdefault(fov, ps.split)


def _as_values(x) -> np.ndarray:
    data = x.data if isinstance(x, Raster) else np.asarray(x)
    return data.astype(np.float64, copy=False).ravel()


def pearson(a, b) -> float:
    """Sample correlation over all pixels; also works on plain vectors."""
    va, vb = _as_values(a), _as_values(b)
    if va.shape != vb.shape:
        raise ValueError(f"size mismatch: {va.size} vs {vb.size} samples")
    if va.size < 2:
        raise ValueError("need at least two samples")
    da = va - va.mean()
    db = vb - vb.mean()
    ssa = float(da @ da)
    ssb = float(db @ db)
    if ssa == 0.0 or ssb == 0.0:
        raise ValueError("correlation of a constant signal is undefined")
    return float((da @ db) / np.sqrt(ssa * ssb))


class MomentAccumulator:
    """Streaming sums for a correlation over many image pairs.

    Accumulators merge associatively, so chunks processed anywhere can
    be combined in any grouping and still reproduce the batch answer.
    """

    __slots__ = ("n", "sa", "sb", "saa", "sbb", "sab")

    def __init__(self):
        self.n = 0
        self.sa = self.sb = self.saa = self.sbb = self.sab = 0.0

    def add(self, a, b) -> None:
        va, vb = _as_values(a), _as_values(b)
        if va.shape != vb.shape:
            raise ValueError(f"size mismatch: {va.size} vs {vb.size} samples")
        self.n += va.size
        self.sa += float(va.sum())
        self.sb += float(vb.sum())
        self.saa += float(va @ va)
        self.sbb += float(vb @ vb)
        self.sab += float(va @ vb)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator()
        for name in self.__slots__:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def correlation(self) -> float:
        if self.n < 2:
            raise ValueError("need at least two samples")
        cov = self.sab - self.sa * self.sb / self.n
        var_a = self.saa - self.sa**2 / self.n
        var_b = self.sbb - self.sb**2 / self.n
        if var_a <= 0.0 or var_b <= 0.0:
            raise ValueError("correlation of a constant signal is undefined")
        return float(cov / np.sqrt(var_a * var_b))


def _unit_range(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if not hi > lo:
        raise ValueError("cannot rescale a constant image")
    return (values - lo) / (hi - lo)


def dataset_pearson(
    pairs: Iterable[tuple], normalize: bool = False
) -> tuple[float, list[float]]:
    """Correlation pooled over every pixel of a set of pairs.

    Returns (pooled rho, per-pair rho list): pooling concatenates all
    pixels, which weights big images more and is sensitive to per-image
    intensity scale; the per-pair list shows the other convention.
    With normalize, each image is first mapped to [0, 1] by its own
    range so scale differences between pairs drop out of the pool.
    """
    acc = MomentAccumulator()
    per_pair = []
    for a, b in pairs:
        va, vb = _as_values(a), _as_values(b)
        if normalize:
            va, vb = _unit_range(va), _unit_range(vb)
        per_pair.append(pearson(va, vb))
        acc.add(va, vb)
    if not per_pair:
        raise ValueError("need at least one pair")
    return acc.correlation(), per_pair


def mass_agreement(
    phase: Raster,
    stain_true: Raster,
    stain_pred: Raster,
    threshold_rule: Callable[[np.ndarray], float] = inflection_threshold,
    wavelength_um: float = DEFAULT_WAVELENGTH_UM,
) -> float:
    """Percent dry-mass difference between two stains' segmentations.

    Each stain is thresholded into its own mask; the phase image is
    integrated inside each; the result is the absolute percent change
    of the computed-stain mass relative to the reference-stain mass.
    """
    for name, img in (("reference", stain_true), ("computed", stain_pred)):
        if img.data.shape != phase.data.shape:
            raise ValueError(f"{name} stain geometry differs from the phase")
    mask_true = stain_true.data > threshold_rule(stain_true.data)
    mask_pred = stain_pred.data > threshold_rule(stain_pred.data)
    if not mask_true.any():
        raise ValueError("reference stain thresholds to an empty mask")
    m_true = dry_mass_pg(phase, wavelength_um, mask_true)
    m_pred = dry_mass_pg(phase, wavelength_um, mask_pred)
    if m_true == 0.0:
        raise ValueError("reference mask holds no mass to compare against")
    return abs(m_pred - m_true) / abs(m_true) * 100.0


def kfold_split(fov_ids, k: int = 5, seed: int = 0) -> list[tuple[str, ...]]:
    """Deterministic disjoint folds over fields of view.

    Folds depend only on the distinct ids and the seed: the input order
    carries no information, so shuffled manifests produce identical
    experiments.
    """
    ids = sorted(set(fov_ids))
    if k < 1:
        raise ValueError(f"need at least one fold, got k={k}")
    if k > len(ids):
        raise ValueError(f"cannot make {k} folds from {len(ids)} fovs")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    base, extra = divmod(len(shuffled), k)
    folds, pos = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(tuple(shuffled[pos : pos + size]))
        pos += size
    return folds


def contrast_variance(r: Raster, region=None) -> float:
    """Population variance of pixel values, optionally inside a mask."""
    if region is None:
        values = r.data.astype(np.float64).ravel()
    else:
        mask = np.asarray(region, dtype=bool)
        if mask.shape != r.data.shape:
            raise ValueError("region shape must match the raster")
        values = r.data[mask].astype(np.float64)
    if values.size == 0:
        raise ValueError("region is empty")
    return float(values.var())
