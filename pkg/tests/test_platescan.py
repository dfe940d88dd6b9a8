"""Focus surfaces, serpentine plans, and focus scoring."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from pics.platescan import (
    ChannelSpec,
    FocusPoint,
    FocusSurface,
    ScanPlan,
    WellRegion,
    haar_focus_metric,
    select_in_focus,
)

PLAN_LITERAL_COUNT = 202_860
MIXED_EVENT_COUNT = 8_820
AFFINE_TOL = 1e-9

PHASE = ChannelSpec("glim", "phase", 10.0, 70.0)
DAPI = ChannelSpec("dapi", "fluorescence", 500.0, 0.0)
DII = ChannelSpec("dii", "fluorescence", 500.0, 0.0)


def six_well_plan(channels=(PHASE,)):
    wells = tuple(
        WellRegion(f"{row}{col}", 9000.0 * col, 9000.0 * ri)
        for ri, row in enumerate("AB")
        for col in (1, 2, 3)
    )
    return ScanPlan(
        wells=wells,
        tile_rows=7,
        tile_cols=7,
        tile_pitch_um=350.0,
        field_of_view_um=400.0,
        z_count=5,
        z_step_um=1.2,
        channels=tuple(channels),
    )


def tilted_plane(x, y):
    return 2.0 + 0.3 * x - 0.7 * y


def surveyed_plane():
    pts = [
        (0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0),
        (5.0, 3.0), (2.0, 8.0),
    ]
    return FocusSurface([FocusPoint(x, y, tilted_plane(x, y)) for x, y in pts])


# --- focus surface ------------------------------------------------------


def test_surface_exact_on_tilted_plane_inside_hull():
    surf = surveyed_plane()
    for x, y in [(1.0, 1.0), (5.0, 5.0), (9.5, 0.5), (3.3, 7.7)]:
        assert surf(x, y) == pytest.approx(tilted_plane(x, y), abs=AFFINE_TOL)


def test_surface_exact_on_tilted_plane_outside_hull():
    surf = surveyed_plane()
    for x, y in [(-5.0, -5.0), (20.0, 3.0), (4.0, 30.0), (-2.0, 11.0)]:
        assert surf(x, y) == pytest.approx(tilted_plane(x, y), abs=AFFINE_TOL)


def test_surface_interpolates_vertices_exactly():
    pts = [
        FocusPoint(0, 0, 1.0), FocusPoint(4, 0, 2.0),
        FocusPoint(0, 4, -1.0), FocusPoint(4, 4, 0.5),
    ]
    surf = FocusSurface(pts)
    for p in pts:
        assert surf(p.x, p.y) == pytest.approx(p.z, abs=AFFINE_TOL)


def test_surface_triangle_centroid_averages_vertices():
    pts = [FocusPoint(0, 0, 3.0), FocusPoint(6, 0, 6.0), FocusPoint(0, 6, 12.0)]
    surf = FocusSurface(pts)
    assert surf(2.0, 2.0) == pytest.approx(7.0, abs=AFFINE_TOL)


def test_surface_vectorized_matches_scalar():
    surf = surveyed_plane()
    xy = np.array([[1.0, 2.0], [-3.0, 4.0], [8.0, 8.0]])
    zs = surf.z_at(xy)
    for (x, y), z in zip(xy, zs):
        assert z == pytest.approx(surf(x, y), abs=1e-12)


def test_surface_rejects_degenerate_surveys():
    line = [FocusPoint(i, 2 * i, 0.0) for i in range(5)]
    with pytest.raises(ValueError):
        FocusSurface(line)
    with pytest.raises(ValueError):
        FocusSurface([FocusPoint(0, 0, 0), FocusPoint(1, 1, 1)])
    with pytest.raises(ValueError):
        FocusSurface([FocusPoint(0, 0, np.nan)] * 3)


# --- scan plan ----------------------------------------------------------


def tiny_plan(**overrides):
    kwargs = dict(
        wells=(WellRegion("A1", 0.0, 0.0),),
        tile_rows=1,
        tile_cols=1,
        tile_pitch_um=350.0,
        field_of_view_um=400.0,
        z_count=1,
        z_step_um=0.0,
        channels=(PHASE,),
    )
    kwargs.update(overrides)
    return ScanPlan(**kwargs)


def test_serpentine_tile_order_literal():
    plan = tiny_plan(tile_rows=3, tile_cols=3)
    assert plan.tile_order() == [
        (0, 0), (0, 1), (0, 2),
        (1, 2), (1, 1), (1, 0),
        (2, 0), (2, 1), (2, 2),
    ]


def test_single_position_phase_channel_takes_four_events():
    events = list(tiny_plan().events())
    assert len(events) == 4
    assert [e.pattern_index for e in events] == [0, 1, 2, 3]
    assert {e.channel for e in events} == {"glim"}


def test_mixed_channel_event_count_literal():
    plan = six_well_plan(channels=(PHASE, DAPI, DII))
    assert plan.frames_per_position() == 6
    assert plan.event_count() == MIXED_EVENT_COUNT
    assert len(list(plan.events())) == MIXED_EVENT_COUNT


def test_phase_image_count_literal():
    plan = six_well_plan(channels=(PHASE, DAPI, DII))
    assert plan.phase_image_count(time_points=138) == PLAN_LITERAL_COUNT
    assert six_well_plan().phase_image_count(138) == PLAN_LITERAL_COUNT


def test_events_follow_stage_motion_then_modulation():
    plan = tiny_plan(
        tile_rows=2, tile_cols=2, z_count=2, z_step_um=1.0,
        channels=(PHASE, DAPI),
    )
    events = list(plan.events())
    assert len(events) == 4 * 2 * 5
    first_tile = events[:10]
    assert {(e.tile_row, e.tile_col) for e in first_tile} == {(0, 0)}
    assert [e.channel for e in first_tile[:5]] == ["glim"] * 4 + ["dapi"]
    assert first_tile[0].z_um == -0.5  # stack centered on z = 0
    assert first_tile[5].z_um == 0.5
    # serpentine: tile (1, 1) comes before (1, 0)
    tiles_seen = []
    for e in events:
        pos = (e.tile_row, e.tile_col)
        if pos not in tiles_seen:
            tiles_seen.append(pos)
    assert tiles_seen == [(0, 0), (0, 1), (1, 1), (1, 0)]


def test_events_track_the_focus_surface():
    surf = surveyed_plane()
    plan = tiny_plan(tile_rows=2, tile_cols=2, tile_pitch_um=4.0,
                     field_of_view_um=5.0)
    events = list(plan.events(focus=surf))
    for e in events:
        assert e.z_um == pytest.approx(tilted_plane(e.x_um, e.y_um), abs=1e-9)


def test_serpentine_never_travels_more_than_raster():
    rng = np.random.default_rng(0)
    for _ in range(10):
        rows, cols = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        pitch = float(rng.uniform(100.0, 400.0))
        plan = tiny_plan(
            tile_rows=rows, tile_cols=cols, tile_pitch_um=pitch,
            field_of_view_um=500.0,
        )

        def travel(order):
            pts = np.array(order, float) * pitch
            return float(np.abs(np.diff(pts, axis=0)).sum())

        raster = [(r, c) for r in range(rows) for c in range(cols)]
        assert travel(plan.tile_order()) <= travel(raster) + 1e-9


def test_plan_validation():
    with pytest.raises(ValueError):
        tiny_plan(wells=())
    with pytest.raises(ValueError):
        tiny_plan(wells=(WellRegion("A1", 0, 0), WellRegion("A1", 1, 1)))
    with pytest.raises(ValueError):
        tiny_plan(tile_rows=0)
    with pytest.raises(ValueError):
        tiny_plan(tile_pitch_um=500.0)  # pitch beyond the field of view
    with pytest.raises(ValueError):
        tiny_plan(z_count=3, z_step_um=0.0)
    with pytest.raises(ValueError):
        tiny_plan(channels=())
    with pytest.raises(ValueError):
        tiny_plan(channels=(ChannelSpec("x", "widefield", 1.0, 0.0),))
    with pytest.raises(ValueError):
        tiny_plan(channels=(ChannelSpec("x", "phase", -1.0, 0.0),))
    with pytest.raises(ValueError):
        tiny_plan().phase_image_count(0)


# --- focus metric -------------------------------------------------------


def test_focus_metric_prefers_sharp_over_blurred():
    rng = np.random.default_rng(0)
    sharp = rng.uniform(0.5, 1.5, (64, 64))
    blurred = gaussian_filter(sharp, 2.0)
    assert haar_focus_metric(sharp) > haar_focus_metric(blurred)


def test_focus_metric_monotone_under_defocus():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.5, 1.5, (96, 96))
    scores = [haar_focus_metric(gaussian_filter(img, s)) for s in (0.5, 1.5, 3.0)]
    assert scores[0] > scores[1] > scores[2]


def test_focus_metric_brightness_invariant():
    rng = np.random.default_rng(2)
    img = rng.uniform(0.5, 1.5, (32, 32))
    assert haar_focus_metric(3.0 * img) == pytest.approx(
        haar_focus_metric(img), rel=1e-12
    )


def test_focus_metric_flat_image_scores_zero():
    assert haar_focus_metric(np.full((16, 16), 5.0)) == 0.0
    assert haar_focus_metric(np.zeros((16, 16))) == 0.0


def test_focus_metric_trims_odd_edges():
    rng = np.random.default_rng(3)
    img = rng.uniform(0.0, 1.0, (33, 33))
    assert haar_focus_metric(img) == haar_focus_metric(img[:32, :32])


def test_focus_metric_rejects_tiny_input():
    with pytest.raises(ValueError):
        haar_focus_metric(np.zeros((1, 8)))


def test_select_in_focus_stable_ties_ascending_output():
    assert select_in_focus([0.1, 0.9, 0.5, 0.9], 2) == [1, 3]
    assert select_in_focus([0.1, 0.9, 0.5, 0.9], 3) == [1, 2, 3]
    assert select_in_focus([0.5, 0.5, 0.5], 2) == [0, 1]
    assert select_in_focus([1.0, 2.0], 0) == []
    assert select_in_focus([0.5, 0.5, 0.5, 0.4]) == [0, 1, 2]  # default k


def test_select_in_focus_unimodal_stack_picks_the_peak_neighborhood():
    scores = [1.0 / (1.0 + (i - 7) ** 2) for i in range(11)]
    assert select_in_focus(scores, 3) == [6, 7, 8]


def test_select_in_focus_on_scored_defocus_series():
    rng = np.random.default_rng(6)
    sharp = rng.uniform(0.5, 1.5, (48, 48))
    stack = [gaussian_filter(sharp, s) for s in (3.0, 2.0, 0.0, 2.5, 4.0)]
    scores = [haar_focus_metric(s) for s in stack]
    assert select_in_focus(scores, 1) == [2]
    # stack-wide intensity scaling does not change the choice
    scaled = [haar_focus_metric(7.0 * s) for s in stack]
    assert select_in_focus(scaled, 3) == select_in_focus(scores, 3)


def test_select_in_focus_validation():
    with pytest.raises(ValueError):
        select_in_focus([1.0], 2)
    with pytest.raises(ValueError):
        select_in_focus([np.nan], 1)
