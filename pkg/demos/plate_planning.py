"""Lay out a six-well overnight scan and interpolate the focus surface.

Counts come straight from the plan geometry: 6 wells x 7x7 tiles x 5 z
slices, four modulation frames per phase image plus two stain exposures.
A three-point focus seed defines a plane; tiles between the seeds get
interpolated z values.
"""

import numpy as np

from pics.platescan import (
    ChannelSpec,
    FocusPoint,
    FocusSurface,
    ScanPlan,
    WellRegion,
)

wells = tuple(
    WellRegion(f"{row}{col}", 9000.0 * (col - 1), 9000.0 * r)
    for r, row in enumerate("AB")
    for col in (1, 2, 3)
)
channels = (
    ChannelSpec("glim", "phase", 10.0, 70.0),
    ChannelSpec("dapi", "fluorescence", 400.0, 5.0),
    ChannelSpec("dii", "fluorescence", 400.0, 5.0),
)
plan = ScanPlan(
    wells=wells, tile_rows=7, tile_cols=7, tile_pitch_um=350.0,
    field_of_view_um=400.0, z_count=5, z_step_um=1.2, channels=channels,
)

events = list(plan.events())
print(f"wells            {len(wells)}")
print(f"events per pass  {len(events):,}")
print(f"phase images     {plan.phase_image_count(time_points=138):,} over 138 passes")

surface = FocusSurface([
    FocusPoint(0.0, 0.0, 10.0),
    FocusPoint(20000.0, 0.0, 12.0),
    FocusPoint(0.0, 20000.0, 9.0),
])
probes = np.array([[5000.0, 5000.0], [15000.0, 2000.0], [18000.0, 18000.0]])
for (x, y), z in zip(probes, surface.z_at(probes)):
    print(f"focus at ({x:7.0f}, {y:7.0f})  ->  z = {z:.3f} um")

first = events[0]
print(f"first event      {first.well} tile ({first.tile_row}, {first.tile_col}) "
      f"{first.channel} pattern {first.pattern_index}")
