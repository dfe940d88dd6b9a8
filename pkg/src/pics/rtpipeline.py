"""Timing model for the live acquire-and-process loop.

The camera streams interferogram frames while retrieval, integration,
inference, and rendering run downstream.  An event-driven simulation
answers what the steady-state frame period is, where the bottleneck
sits, and how long the first result takes to appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .qpi_recon import FRAME_COUNT

STAGE_NAMES = ("acquire", "readout", "retrieve", "integrate", "infer", "render")
_COMPUTE_STAGES = ("retrieve", "integrate", "infer", "render")


@dataclass(frozen=True)
class StageProfile:
    """Per-stage durations in milliseconds.

    Acquisition is stage settling plus exposure and owns the camera;
    readout owns the transfer bus; the compute stages each own a worker
    unless the pipeline is run fused on a single one.  Inference cost
    scales with the number of stain channels produced.
    """

    settle_ms: float = 70.0
    exposure_ms: float = 10.0
    readout_ms: float = 10.0
    retrieve_ms: float = 2.0
    integrate_ms: float = 6.0
    infer_ms_per_channel: float = 65.0
    render_ms: float = 6.0
    stain_channels: int = 1

    def __post_init__(self):
        for name in (
            "settle_ms", "exposure_ms", "readout_ms", "retrieve_ms",
            "integrate_ms", "infer_ms_per_channel", "render_ms",
        ):
            val = getattr(self, name)
            if not val >= 0:
                raise ValueError(f"{name} must be non-negative, got {val}")
        if self.stain_channels < 1:
            raise ValueError("need at least one stain channel")
        if not self.acquire_ms > 0:
            raise ValueError("acquisition must take positive time")

    @property
    def acquire_ms(self) -> float:
        return self.settle_ms + self.exposure_ms

    @property
    def infer_ms(self) -> float:
        return self.infer_ms_per_channel * self.stain_channels

    def stage_ms(self, stage: str) -> float:
        return {
            "acquire": self.acquire_ms,
            "readout": self.readout_ms,
            "retrieve": self.retrieve_ms,
            "integrate": self.integrate_ms,
            "infer": self.infer_ms,
            "render": self.render_ms,
        }[stage]


def glim_profile(stain_channels: int = 1) -> StageProfile:
    """Interferometric mode: slow modulator, cheap gradient integration."""
    return StageProfile(stain_channels=stain_channels)


def slim_profile(stain_channels: int = 1) -> StageProfile:
    """Diffraction-phase mode: fast modulator, costly halo removal."""
    return StageProfile(
        settle_ms=20.0, integrate_ms=25.0, stain_channels=stain_channels
    )


class StageWindow(NamedTuple):
    """One stage execution: which output it serves and when it ran."""

    stage: str
    index: int
    start_ms: float
    end_ms: float


@dataclass(frozen=True)
class Timeline:
    windows: tuple[StageWindow, ...]

    def for_stage(self, stage: str) -> list[StageWindow]:
        return [w for w in self.windows if w.stage == stage]

    def output_times(self) -> list[float]:
        return [w.end_ms for w in self.for_stage("render")]

    def latency_ms(self) -> float:
        """Time from the very first camera trigger to the first result."""
        return self.output_times()[0]

    def measured_period_ms(self) -> float:
        """Steady-state spacing of results, ignoring the warmup output."""
        times = self.output_times()
        if len(times) < 3:
            raise ValueError("need at least three outputs to measure a period")
        return (times[-1] - times[1]) / (len(times) - 2)


def _frames_per_output(sliding: bool) -> int:
    return 1 if sliding else FRAME_COUNT


def _busy_per_output(
    profile: StageProfile, sliding: bool, fused: bool
) -> dict[str, float]:
    """Resource occupancy per finished result, keyed by resource name."""
    fpo = _frames_per_output(sliding)
    busy = {
        "acquire": fpo * profile.acquire_ms,
        "readout": fpo * profile.readout_ms,
    }
    if fused:
        busy["compute"] = sum(profile.stage_ms(s) for s in _COMPUTE_STAGES)
    else:
        busy.update({s: profile.stage_ms(s) for s in _COMPUTE_STAGES})
    return busy


def steady_state_period(
    profile: StageProfile, sliding: bool = True, fused: bool = False
) -> float:
    """Milliseconds between results once the pipeline is saturated."""
    return max(_busy_per_output(profile, sliding, fused).values())


def bottleneck_stage(
    profile: StageProfile, sliding: bool = True, fused: bool = False
) -> str:
    busy = _busy_per_output(profile, sliding, fused)
    return max(busy, key=lambda k: (busy[k], k))


def simulate_stream(
    profile: StageProfile,
    n_outputs: int,
    sliding: bool = True,
    fused: bool = False,
) -> Timeline:
    """Run the event-driven pipeline until n_outputs results render.

    The camera free-runs back to back.  Every other stage starts as
    soon as both its input and its resource are free.  With a sliding
    window each new frame completes a phase image once the first
    FRAME_COUNT frames are in; otherwise frames group into disjoint
    blocks of FRAME_COUNT.
    """
    if n_outputs < 1:
        raise ValueError("need at least one output")
    fpo = _frames_per_output(sliding)
    n_frames = (
        FRAME_COUNT - 1 + n_outputs if sliding else FRAME_COUNT * n_outputs
    )
    windows: list[StageWindow] = []

    acquire_end = []
    clock = 0.0
    for i in range(n_frames):
        start, clock = clock, clock + profile.acquire_ms
        windows.append(StageWindow("acquire", i, start, clock))
        acquire_end.append(clock)

    readout_end = []
    free = 0.0
    for i in range(n_frames):
        start = max(acquire_end[i], free)
        free = start + profile.readout_ms
        windows.append(StageWindow("readout", i, start, free))
        readout_end.append(free)

    compute_free = dict.fromkeys(_COMPUTE_STAGES, 0.0)
    fused_free = 0.0
    for j in range(n_outputs):
        last_frame = FRAME_COUNT - 1 + j * fpo
        ready = readout_end[last_frame]
        for stage in _COMPUTE_STAGES:
            resource_free = fused_free if fused else compute_free[stage]
            start = max(ready, resource_free)
            ready = start + profile.stage_ms(stage)
            windows.append(StageWindow(stage, j, start, ready))
            if fused:
                fused_free = ready
            else:
                compute_free[stage] = ready

    return Timeline(tuple(windows))


def simulate_frames(
    profile: StageProfile,
    n_frames: int,
    sliding: bool = True,
    fused: bool = False,
) -> Timeline:
    """Simulate by camera frame budget instead of output count.

    A sliding window turns every frame beyond the first FRAME_COUNT - 1
    into a result; without it, frames must group evenly into blocks.
    """
    if n_frames < FRAME_COUNT:
        raise ValueError(
            f"need at least {FRAME_COUNT} frames for one result, "
            f"got {n_frames}"
        )
    if sliding:
        n_outputs = n_frames - (FRAME_COUNT - 1)
    else:
        if n_frames % FRAME_COUNT:
            raise ValueError(
                f"{n_frames} frames do not group into blocks of {FRAME_COUNT}"
            )
        n_outputs = n_frames // FRAME_COUNT
    return simulate_stream(profile, n_outputs, sliding, fused)


def throughput_report(
    profile: StageProfile,
    baseline_ms: float | None = None,
    sliding: bool = True,
    fused: bool = False,
) -> dict:
    """Summarize the pipeline: period, rate, utilization, bottleneck.

    With a baseline (e.g. the per-image cost of the workflow being
    replaced), both accountings of the speedup are reported: the plain
    period ratio, and the ratio counting the baseline as extra work on
    top of a period of acquisition.
    """
    period = steady_state_period(profile, sliding, fused)
    latency = simulate_stream(profile, 1, sliding, fused).latency_ms()
    busy = _busy_per_output(profile, sliding, fused)
    report = {
        "period_ms": period,
        "outputs_per_s": 1000.0 / period,
        "latency_ms": latency,
        "bottleneck": bottleneck_stage(profile, sliding, fused),
        "utilization": {name: b / period for name, b in busy.items()},
        "sliding": sliding,
        "fused": fused,
    }
    if baseline_ms is not None:
        if not baseline_ms >= 0:
            raise ValueError("baseline must be non-negative")
        report["baseline_ms"] = baseline_ms
        report["speedup_replacing_baseline"] = baseline_ms / period
        report["speedup_with_acquisition"] = (baseline_ms + period) / period
    return report
