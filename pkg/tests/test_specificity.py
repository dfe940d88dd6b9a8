"""Thresholding, instance splitting, and dry-mass integration."""

import numpy as np
import pytest

from pics.imagecore import Raster
from pics.specificity import (
    SEMANTIC_BACKGROUND,
    SEMANTIC_CYTOPLASM,
    SEMANTIC_NUCLEUS,
    binarize,
    compose_semantic,
    dry_mass_pg,
    inflection_threshold,
    load_mask_pgm,
    save_mask_pgm,
    split_instances,
    subtract_background,
)

THRESHOLD_LO, THRESHOLD_HI = 0.2, 0.6
MIN_RECOVERY = 0.99
MAX_FALSE_POSITIVE = 0.01
MASS_EXAMPLE_PG = 15.5176
SPLIT_LINE_TOL_PX = 1


def bimodal(seed, n=64 * 64, bg_frac=0.8):
    rng = np.random.default_rng(seed)
    nbg = int(n * bg_frac)
    bg = rng.normal(0.1, 0.02, nbg)
    fg = rng.normal(0.8, 0.05, n - nbg)
    truth = np.zeros(n, bool)
    truth[nbg:] = True
    return np.concatenate([bg, fg]), truth


# --- threshold ----------------------------------------------------------


def test_threshold_separates_bimodal_populations():
    for seed in range(20):
        values, truth = bimodal(seed)
        t = inflection_threshold(values)
        assert THRESHOLD_LO < t < THRESHOLD_HI, (seed, t)
        mask = values > t
        recovery = (mask & truth).sum() / truth.sum()
        false_pos = (mask & ~truth).sum() / (~truth).sum()
        assert recovery >= MIN_RECOVERY, (seed, recovery)
        assert false_pos <= MAX_FALSE_POSITIVE, (seed, false_pos)


def test_threshold_affine_equivariance():
    values, _ = bimodal(7)
    t = inflection_threshold(values)
    for a, b in [(2.0, 0.0), (0.5, 1.0), (10.0, -3.0)]:
        t2 = inflection_threshold(a * values + b)
        assert abs(t2 - (a * t + b)) < 1e-9 * max(1.0, abs(a * t + b))


def test_threshold_two_valued_input():
    values = np.concatenate([np.zeros(500), np.ones(300)])
    t = inflection_threshold(values)
    assert 0.0 < t < 1.0
    mask = values > t
    assert mask.sum() == 300


def test_threshold_idempotent_on_mask():
    values, _ = bimodal(3)
    mask = (values > inflection_threshold(values)).astype(np.float64)
    again = mask > inflection_threshold(mask)
    assert np.array_equal(again, mask.astype(bool))


def test_threshold_coarse_bins_still_works():
    values, truth = bimodal(11)
    t = inflection_threshold(values, bins=16)
    mask = values > t
    assert (mask & truth).sum() / truth.sum() >= MIN_RECOVERY


def test_threshold_rejects_degenerate_input():
    with pytest.raises(ValueError):
        inflection_threshold(np.ones(100))
    with pytest.raises(ValueError):
        inflection_threshold(np.array([]))
    with pytest.raises(ValueError):
        inflection_threshold(np.array([0.0, np.nan, 1.0]))
    with pytest.raises(ValueError):
        inflection_threshold(np.arange(10.0), bins=4)


def test_binarize_strictness():
    r = Raster(np.array([[0.1, 0.5, 0.9]], np.float32), 1.0)
    assert binarize(r, 0.5).tolist() == [[False, False, True]]


# --- semantic composition ----------------------------------------------


def test_compose_semantic_levels_and_precedence():
    nuc = np.array([[True, False], [False, False]])
    cyt = np.array([[True, True], [False, False]])
    sem = compose_semantic(nuc, cyt)
    assert sem.dtype == np.uint8
    assert sem[0, 0] == SEMANTIC_NUCLEUS
    assert sem[0, 1] == SEMANTIC_CYTOPLASM
    assert sem[1, 0] == SEMANTIC_BACKGROUND
    with pytest.raises(ValueError):
        compose_semantic(nuc, cyt[:1])


# --- dry mass -----------------------------------------------------------


def test_dry_mass_worked_example():
    r = Raster(np.ones((10, 10), np.float32), 0.5)
    assert dry_mass_pg(r, 0.78) == pytest.approx(MASS_EXAMPLE_PG, abs=5e-4)


def test_dry_mass_masked_additivity():
    rng = np.random.default_rng(0)
    r = Raster(rng.uniform(0, 1, (20, 20)).astype(np.float32), 0.4)
    left = np.zeros((20, 20), bool)
    left[:, :10] = True
    total = dry_mass_pg(r, 0.78)
    parts = dry_mass_pg(r, 0.78, left) + dry_mass_pg(r, 0.78, ~left)
    assert parts == pytest.approx(total, rel=1e-12)


def test_dry_mass_scales_with_pixel_area():
    data = np.ones((8, 8), np.float32)
    m1 = dry_mass_pg(Raster(data, 0.5), 0.78)
    m2 = dry_mass_pg(Raster(data, 1.0), 0.78)
    assert m2 == pytest.approx(4.0 * m1, rel=1e-12)


def test_dry_mass_validation():
    r = Raster(np.ones((4, 4), np.float32), 0.5)
    with pytest.raises(ValueError):
        dry_mass_pg(r, 0.0)
    with pytest.raises(ValueError):
        dry_mass_pg(r, 0.78, np.ones((2, 2), bool))


def test_subtract_background_zeroes_empty_region():
    rng = np.random.default_rng(1)
    data = rng.uniform(0.2, 0.3, (16, 16)).astype(np.float32)
    fg = np.zeros((16, 16), bool)
    fg[4:12, 4:12] = True
    data[fg] += 1.0
    out = subtract_background(Raster(data, 0.5), fg)
    assert abs(out.data[~fg].mean(dtype=np.float64)) < 1e-6
    with pytest.raises(ValueError):
        subtract_background(Raster(data, 0.5), np.ones((16, 16), bool))


# --- instance splitting -------------------------------------------------


def disc_mask(h, w, centers, radius):
    yy, xx = np.mgrid[0:h, 0:w]
    m = np.zeros((h, w), bool)
    for cy, cx in centers:
        m |= (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    return m


def test_split_two_fused_discs_along_bisector():
    m = disc_mask(64, 64, [(32, 24), (32, 40)], 10)
    labels, count = split_instances(m)
    assert count == 2
    assert labels.dtype == np.int32
    assert np.array_equal(labels > 0, m)
    left_cols = np.nonzero(labels == 1)[1]
    right_cols = np.nonzero(labels == 2)[1]
    assert left_cols.mean() < right_cols.mean()
    # the cut between them sits on the geometric bisector
    assert abs(left_cols.max() - 31.5) <= SPLIT_LINE_TOL_PX
    assert abs(right_cols.min() - 32.5) <= SPLIT_LINE_TOL_PX


def test_split_single_disc_stays_whole():
    m = disc_mask(48, 48, [(24, 24)], 12)
    labels, count = split_instances(m)
    assert count == 1
    assert np.array_equal(labels == 1, m)


def test_split_translation_invariance():
    base = disc_mask(80, 80, [(30, 29), (30, 45)], 10)
    shifted = np.roll(np.roll(base, 3, axis=0), 5, axis=1)
    lab_a, n_a = split_instances(base)
    lab_b, n_b = split_instances(shifted)
    assert n_a == n_b == 2
    areas_a = sorted(np.bincount(lab_a.ravel())[1:].tolist())
    areas_b = sorted(np.bincount(lab_b.ravel())[1:].tolist())
    assert areas_a == areas_b


def test_split_keeps_shallow_components():
    m = disc_mask(64, 64, [(16, 16)], 10)
    m[50:52, 50:52] = True  # speck too small for a prominent peak
    labels, count = split_instances(m)
    assert count == 2
    assert np.array_equal(labels > 0, m)


def test_split_min_area_filter():
    m = disc_mask(64, 64, [(16, 16)], 10)
    m[50:52, 50:52] = True
    labels, count = split_instances(m, min_area_px=10)
    assert count == 1
    assert labels[51, 51] == 0


def test_split_empty_mask():
    labels, count = split_instances(np.zeros((32, 32), bool))
    assert count == 0
    assert not labels.any()


def test_split_labels_in_raster_order():
    m = np.zeros((20, 20), bool)
    m[12:18, 2:8] = True  # lower-left, but second in raster order
    m[2:8, 12:18] = True
    labels, count = split_instances(m)
    assert count == 2
    assert labels[2, 12] == 1
    assert labels[12, 2] == 2


# --- PGM files ----------------------------------------------------------


def test_pgm_uint8_round_trip(tmp_path):
    sem = compose_semantic(
        disc_mask(12, 16, [(6, 5)], 3), disc_mask(12, 16, [(6, 8)], 5)
    )
    path = tmp_path / "sem.pgm"
    save_mask_pgm(path, sem)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n16 12\n255\n")
    assert len(raw) == len(b"P5\n16 12\n255\n") + 12 * 16
    back = load_mask_pgm(path)
    assert back.dtype == np.uint8
    assert np.array_equal(back, sem)


def test_pgm_uint16_round_trip(tmp_path):
    labels, _ = split_instances(disc_mask(40, 40, [(20, 14), (20, 26)], 8))
    path = tmp_path / "inst.pgm"
    save_mask_pgm(path, labels)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n40 40\n65535\n")
    back = load_mask_pgm(path)
    assert back.dtype == np.uint16
    assert np.array_equal(back, labels.astype(np.uint16))


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        save_mask_pgm(tmp_path / "x.pgm", np.zeros((2, 2), np.float32))
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 3)
    with pytest.raises(ValueError):
        load_mask_pgm(path)
    path2 = tmp_path / "magic.pgm"
    path2.write_bytes(b"P2\n2 2\n255\n....")
    with pytest.raises(ValueError):
        load_mask_pgm(path2)
