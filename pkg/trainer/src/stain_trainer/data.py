"""Training pairs: synthetic generation and manifest CSV interchange.

The manifest schema matches what the evaluation tooling reads: columns
phase_path, stain_path, fov, z, split, with image paths resolved
relative to the manifest's own directory.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F

from .formats import CHANNEL_DAPI, CHANNEL_PHASE, load_raster, save_raster

MANIFEST_COLUMNS = ("phase_path", "stain_path", "fov", "z", "split")


@dataclass(frozen=True)
class Pair:
    """One phase image and its fluorescence ground truth."""

    phase: np.ndarray
    stain: np.ndarray
    fov: str
    z: int = 0
    split: str = "train"

    def with_split(self, split: str) -> "Pair":
        return replace(self, split=split)


def toy_stain(normalized_phase: np.ndarray) -> np.ndarray:
    """Analytic target: clamp(2x - 0.3) on the normalized phase."""
    return np.clip(2.0 * normalized_phase - 0.3, 0.0, 1.0).astype(np.float32)


def _smooth_field(generator: torch.Generator, size: int) -> np.ndarray:
    # coarse 1/16-scale noise keeps the fields band-limited enough for the
    # 50-epoch convergence budget
    side = max(2, size // 16)
    coarse = torch.randn(1, 1, side, side, generator=generator)
    fine = F.interpolate(
        coarse, size=(size, size), mode="bilinear", align_corners=False
    )[0, 0].numpy()
    if fine.max() == fine.min():
        return np.full((size, size), 0.5, np.float32)
    lo, hi = float(fine.min()), float(fine.max())
    return ((fine - lo) / (hi - lo)).astype(np.float32)


def toy_pairs(
    counts: dict[str, int], size: int = 64, seed: int = 0
) -> list[Pair]:
    """Seeded synthetic pairs; phase already lies in [0, 1].

    counts maps split name to pair count, e.g. {"train": 40, "test": 6}.
    Each pair is its own field of view so fov-wise protocols see real
    granularity.
    """
    generator = torch.Generator().manual_seed(seed)
    pairs = []
    for split in sorted(counts):
        for i in range(counts[split]):
            phase = _smooth_field(generator, size)
            pairs.append(
                Pair(phase, toy_stain(phase), f"{split}{i:03d}", split=split)
            )
    return pairs


def write_pair_files(directory, pairs: list[Pair], pixel_size: float = 0.1) -> str:
    """Materialize pairs as PICSR1 files plus a manifest CSV.

    Returns the manifest path. Phase images carry the phase channel tag
    with a nominal shear; stains carry the nuclear tag.
    """
    os.makedirs(directory, exist_ok=True)
    manifest = os.path.join(directory, "manifest.csv")
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for pair in pairs:
            phase_name = f"{pair.fov}_z{pair.z}_phase.picsr1"
            stain_name = f"{pair.fov}_z{pair.z}_stain.picsr1"
            save_raster(
                os.path.join(directory, phase_name), pair.phase, pixel_size,
                channel=CHANNEL_PHASE, shear=0.3, z_index=pair.z,
            )
            save_raster(
                os.path.join(directory, stain_name), pair.stain, pixel_size,
                channel=CHANNEL_DAPI, z_index=pair.z,
            )
            writer.writerow([phase_name, stain_name, pair.fov, pair.z, pair.split])
    return manifest


def read_pair_files(manifest) -> list[Pair]:
    base = os.path.dirname(os.path.abspath(manifest))
    pairs = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest lacks columns {sorted(missing)}")
        for row in reader:
            phase = load_raster(os.path.join(base, row["phase_path"]))
            stain = load_raster(os.path.join(base, row["stain_path"]))
            pairs.append(
                Pair(phase.data, stain.data, row["fov"], int(row["z"]), row["split"])
            )
    return pairs
