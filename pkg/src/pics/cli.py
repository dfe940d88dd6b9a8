"""Command line front end.

Eight subcommands wire the library into a file-driven workflow:
reconstruct (interferograms to phase), infer (phase to stain), segment
(stains to masks and a mass table), growth (mass tables to kinetics),
plan (scan configuration to an event list), simulate-pipeline (timing
model to a stage timeline), evaluate (paired images to agreement
metrics) and phantom (synthetic calibration scenes).

Runs are deterministic: outputs depend only on argv, the input files
and --seed, never on wall-clock time.  Each subcommand drops a
resolved-config echo next to its outputs recording the settings it
actually ran with, so any result file can be traced back to a full
parameter set.

Exit codes: 0 on success, 2 for usage errors (argparse), 1 for domain
errors, which are printed to stderr tagged with the module they came
from.
"""

from __future__ import annotations

import argparse
import csv
import functools
import glob
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .imagecore import ChannelTag, ImageMeta, Raster, load_raster, save_raster
from .qpi_recon import (
    BEAD_DIAMETER_UM,
    BEAD_INDEX,
    DEFAULT_LREG_NYQUIST_FRACTION,
    DEFAULT_SHEAR_UM,
    DEFAULT_WAVELENGTH_UM,
    FRAME_COUNT,
    MEDIA_INDEX,
    FrameSet,
    bead_peak_phase,
    integrate_hilbert,
    make_bead_phantom,
    retrieve_gradient,
    simulate_glim_frames,
)
from .stain_infer import infer_stain, load_weights, spec_from_weights
from .specificity import (
    DEFAULT_SPLIT_DEPTH,
    binarize,
    compose_semantic,
    dry_mass_pg,
    inflection_threshold,
    save_mask_pgm,
    split_instances,
    subtract_background,
)
from .growth import (
    MassSeries,
    doubling_time,
    median_across_fovs,
    normalize_series,
    nuclear_cytoplasmic_ratio,
)
from .platescan import (
    CHANNEL_KINDS,
    ChannelSpec,
    FocusPoint,
    FocusSurface,
    ScanPlan,
    WellRegion,
)
from .rtpipeline import glim_profile, simulate_frames, slim_profile, throughput_report
from .evalkit import MomentAccumulator, mass_agreement

FORMAT_VERSIONS = ("PICSR1", "PICSW1")

STAIN_CHANNELS = {"dapi": ChannelTag.DAPI, "dii": ChannelTag.DII}

MANIFEST_COLUMNS = ("phase_path", "stain_path", "fov", "z", "split")

MASS_COLUMNS = (
    "fov",
    "t",
    "nucleus_pg",
    "cytoplasm_pg",
    "total_pg",
    "nucleus_area_um2",
    "cytoplasm_area_um2",
)


class CliError(Exception):
    """Domain failure with the module it should be reported against."""

    def __init__(self, module: str, message: str):
        super().__init__(message)
        self.module = module


# stderr tag used when a library exception escapes a handler untagged
_MODULE_TAGS = {
    "reconstruct": "qpi_recon",
    "infer": "stain_infer",
    "segment": "specificity",
    "growth": "growth",
    "plan": "platescan",
    "simulate-pipeline": "rtpipeline",
    "evaluate": "evalkit",
    "phantom": "qpi_recon",
}


# ---------------------------------------------------------------- output


def _fmt(value) -> str:
    """Canonical text for one config/CSV cell; floats round-trip exactly."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_json(path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    _write_text(path, buf.getvalue())


def _write_echo(path, sections: dict) -> None:
    """Resolved-config echo: the settings a run actually used."""
    lines = []
    for section, settings in sections.items():
        lines.append(f"[{section}]")
        for key in sorted(settings):
            lines.append(f"{key} = {_fmt(settings[key])}")
        lines.append("")
    _write_text(path, "\n".join(lines))


# ---------------------------------------------------------------- config


def parse_config_text(text: str) -> dict:
    """Parse sectioned key=value text into {section: {key: value}}.

    Lines are `[section]` headers, `key = value` pairs, comments (#) or
    blank.  Duplicate sections or keys are rejected: a config where the
    last write silently wins hides typos.
    """
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise CliError("config", f"line {lineno}: empty section name")
            if name in sections:
                raise CliError("config", f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise CliError("config", f"line {lineno}: expected key = value, got {line!r}")
        if current is None:
            raise CliError("config", f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise CliError("config", f"line {lineno}: empty key")
        if key in sections[current]:
            raise CliError("config", f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def _config_float(section: str, key: str, value: str, positive: bool = True) -> float:
    try:
        num = float(value)
    except ValueError:
        raise CliError("config", f"[{section}] {key}: {value!r} is not a number") from None
    if not math.isfinite(num):
        raise CliError("config", f"[{section}] {key}: must be finite")
    if positive and not num > 0:
        raise CliError("config", f"[{section}] {key}: must be > 0, got {value}")
    return num


def _config_int(section: str, key: str, value: str, minimum: int = 1) -> int:
    try:
        num = int(value)
    except ValueError:
        raise CliError("config", f"[{section}] {key}: {value!r} is not an integer") from None
    if num < minimum:
        raise CliError("config", f"[{section}] {key}: must be >= {minimum}, got {num}")
    return num


# ---------------------------------------------------------------- loading


def _load_image(path, module: str):
    try:
        return load_raster(path)
    except FileNotFoundError:
        raise CliError(module, f"no such file: {path}") from None
    except (OSError, ValueError) as exc:
        raise CliError(module, f"{path}: {exc}") from exc


def _read_table(path, required, module: str):
    """Read a CSV with at least the required columns; extras pass through."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames
            rows = list(reader)
    except FileNotFoundError:
        raise CliError(module, f"no such file: {path}") from None
    except OSError as exc:
        raise CliError(module, f"{path}: {exc}") from exc
    if fields is None:
        raise CliError(module, f"{path}: empty file, expected a CSV header")
    missing = [c for c in required if c not in fields]
    if missing:
        raise CliError(module, f"{path}: missing columns {missing}")
    if not rows:
        raise CliError(module, f"{path}: no data rows")
    return rows


def _row_float(row, column: str, path, module: str) -> float:
    try:
        return float(row[column])
    except ValueError:
        raise CliError(
            module, f"{path}: column {column!r} holds non-numeric {row[column]!r}"
        ) from None


# ------------------------------------------------------------- reconstruct


def _expand_frames(patterns):
    if len(patterns) == 1 and any(ch in patterns[0] for ch in "*?["):
        paths = sorted(glob.glob(patterns[0]))
        if not paths:
            raise CliError("qpi_recon", f"glob matched nothing: {patterns[0]}")
    else:
        paths = list(patterns)
    if len(paths) != FRAME_COUNT:
        raise CliError(
            "qpi_recon",
            f"need exactly {FRAME_COUNT} frame files in modulation order, got {len(paths)}",
        )
    return paths


def _cmd_reconstruct(args) -> None:
    if args.mode == "sgn" and args.lreg is not None:
        raise CliError("qpi_recon", "--lreg applies to wiener mode only")
    paths = _expand_frames(args.frames)
    loaded = [_load_image(p, "qpi_recon") for p in paths]
    rasters = [r for r, _ in loaded]
    metas = [m for _, m in loaded]
    shape = rasters[0].data.shape
    px = rasters[0].pixel_size
    for p, r in zip(paths, rasters):
        if r.data.shape != shape:
            raise CliError("qpi_recon", f"frame shape mismatch at {p}: {r.data.shape} vs {shape}")
        if r.pixel_size != px:
            raise CliError("qpi_recon", f"frame pixel size mismatch at {p}")
    shear = args.shear if args.shear is not None else metas[0].shear
    if not shear > 0:
        raise CliError("qpi_recon", "no shear: pass --shear or use frames whose header carries one")
    wavelength = metas[0].wavelength

    fs = FrameSet(np.stack([r.data for r in rasters]), px, shear)
    grad = retrieve_gradient(fs)
    phase = integrate_hilbert(grad, mode=args.mode, l_reg=args.lreg, wavelength=wavelength)
    save_raster(args.out, phase.raster, ImageMeta(wavelength, ChannelTag.PHASE, shear=shear))

    lreg_used = args.lreg
    if args.mode == "wiener" and lreg_used is None:
        lreg_used = DEFAULT_LREG_NYQUIST_FRACTION * math.pi / px
    _write_json(
        args.out + ".json",
        {
            "mode": args.mode,
            "l_reg": lreg_used,
            "shear_um": shear,
            "pixel_size_um": px,
            "wavelength_um": wavelength,
            "width": phase.raster.width,
            "height": phase.raster.height,
            "frames": paths,
        },
    )
    _write_echo(
        args.out + ".cfg",
        {
            "reconstruct": {
                "frames": paths,
                "shear_um": shear,
                "mode": args.mode,
                "l_reg": lreg_used,
                "out": args.out,
                "seed": args.seed,
            }
        },
    )


# ------------------------------------------------------------------ infer


def _channel_path(out: str, name: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}.{name}{ext}" if ext else f"{out}.{name}"


def _resolve_channels(n_weights: int, names):
    if names is not None:
        names = [n.lower() for n in names]
        if len(names) != n_weights:
            raise CliError(
                "stain_infer",
                f"{n_weights} weight files but {len(names)} channel names",
            )
    elif n_weights == 1:
        names = ["dapi"]
    elif n_weights == 2:
        names = ["dapi", "dii"]
    else:
        raise CliError("stain_infer", "more than two weight files: name each with --channels")
    for name in names:
        if name not in STAIN_CHANNELS:
            raise CliError(
                "stain_infer",
                f"unknown channel {name!r}, expected one of {sorted(STAIN_CHANNELS)}",
            )
    if len(set(names)) != len(names):
        raise CliError("stain_infer", "channel names must be distinct")
    return names


def _cmd_infer(args) -> None:
    raster, meta = _load_image(args.phase, "stain_infer")
    names = _resolve_channels(len(args.weights), args.channels)
    single = len(args.weights) == 1
    outs = [args.out] if single else [_channel_path(args.out, n) for n in names]
    for wpath, name, opath in zip(args.weights, names, outs):
        try:
            store = load_weights(wpath)
        except FileNotFoundError:
            raise CliError("stain_infer", f"no such file: {wpath}") from None
        spec = spec_from_weights(store)
        stain = infer_stain(
            raster,
            spec,
            store,
            rho_min=args.rho_min,
            rho_max=args.rho_max,
            net_pixel_size=args.net_pixel_size,
            channel=STAIN_CHANNELS[name],
        )
        save_raster(
            opath,
            stain.raster,
            ImageMeta(meta.wavelength, channel=stain.channel, shear=0.0),
        )
    _write_echo(
        args.out + ".cfg",
        {
            "infer": {
                "phase": args.phase,
                "weights": list(args.weights),
                "channels": names,
                "rho_min": args.rho_min,
                "rho_max": args.rho_max,
                "net_pixel_size_um": args.net_pixel_size,
                "outputs": outs,
                "seed": args.seed,
            }
        },
    )


# ---------------------------------------------------------------- segment


def _cmd_segment(args) -> None:
    dapi, _ = _load_image(args.dapi, "specificity")
    dii, _ = _load_image(args.dii, "specificity")
    phase, phase_meta = _load_image(args.phase, "specificity")
    shape = phase.data.shape
    if dapi.data.shape != shape or dii.data.shape != shape:
        raise CliError(
            "specificity",
            f"image shapes differ: dapi {dapi.data.shape}, dii {dii.data.shape}, phase {shape}",
        )
    if not (dapi.pixel_size == dii.pixel_size == phase.pixel_size):
        raise CliError("specificity", "pixel sizes differ across the three images")

    nucleus = binarize(dapi, inflection_threshold(dapi.data))
    cytoplasm = binarize(dii, inflection_threshold(dii.data))
    semantic = compose_semantic(nucleus, cytoplasm)
    cells = nucleus | cytoplasm

    px = phase.pixel_size
    min_area_px = args.min_area_um2 / (px * px)
    labels, count = split_instances(cells, args.split_depth, min_area_px)

    corrected = subtract_background(phase, cells) if cells.any() else phase
    wl = phase_meta.wavelength
    cytoplasm_only = cytoplasm & ~nucleus
    nucleus_pg = dry_mass_pg(corrected, wl, nucleus)
    cytoplasm_pg = dry_mass_pg(corrected, wl, cytoplasm_only)
    total_pg = dry_mass_pg(corrected, wl, cells)

    fov = args.fov if args.fov is not None else os.path.splitext(os.path.basename(args.phase))[0]
    t_h = args.time_h if args.time_h is not None else phase_meta.timestamp / 3600.0

    prefix = args.out_prefix
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_mask_pgm(prefix + "semantic.pgm", semantic)
    save_mask_pgm(prefix + "instances.pgm", labels)
    area = px * px
    _write_csv(
        prefix + "masses.csv",
        MASS_COLUMNS,
        [
            [
                fov,
                t_h,
                nucleus_pg,
                cytoplasm_pg,
                total_pg,
                float(nucleus.sum()) * area,
                float(cytoplasm_only.sum()) * area,
            ]
        ],
    )
    _write_echo(
        prefix + "resolved.cfg",
        {
            "segment": {
                "dapi": args.dapi,
                "dii": args.dii,
                "phase": args.phase,
                "out_prefix": prefix,
                "split_depth": args.split_depth,
                "min_area_um2": args.min_area_um2,
                "fov": fov,
                "time_h": t_h,
                "instances": count,
                "seed": args.seed,
            }
        },
    )


# ----------------------------------------------------------------- growth


def _series_by_fov(rows, path):
    grouped: dict[str, list] = {}
    for row in rows:
        fov = row["fov"]
        grouped.setdefault(fov, []).append(
            (
                _row_float(row, "t", path, "growth"),
                _row_float(row, "nucleus_pg", path, "growth"),
                _row_float(row, "cytoplasm_pg", path, "growth"),
                _row_float(row, "total_pg", path, "growth"),
            )
        )
    out = {}
    for fov in sorted(grouped):
        samples = sorted(grouped[fov], key=lambda s: s[0])
        t = np.array([s[0] for s in samples])
        out[fov] = (
            t,
            np.array([s[1] for s in samples]),
            np.array([s[2] for s in samples]),
            np.array([s[3] for s in samples]),
        )
    return out


def _cmd_growth(args) -> None:
    rows = _read_table(args.masses, ("fov", "t", "nucleus_pg", "cytoplasm_pg", "total_pg"), "growth")
    per_fov = _series_by_fov(rows, args.masses)
    os.makedirs(args.out, exist_ok=True)
    fit_range = tuple(args.fit_range) if args.fit_range is not None else None

    curve_rows = []
    td_rows = []
    ncr_rows = []
    normalized = []
    for fov, (t, nuc, cyt, tot) in per_fov.items():
        series = MassSeries(t, tot, label=fov)
        norm = normalize_series(series, args.window)
        normalized.append(norm)
        for ti, mi in zip(norm.times_h, norm.mass_pg):
            curve_rows.append([fov, float(ti), float(mi)])
        td, r2 = doubling_time(norm, fit_range)
        td_rows.append([fov, td, r2])
        ratio, excluded = nuclear_cytoplasmic_ratio(nuc, cyt)
        for ti, ri, ei in zip(t, ratio, excluded):
            ncr_rows.append([fov, float(ti), float(ri), int(ei)])

    median = median_across_fovs(normalized)
    median_rows = [[float(ti), float(mi)] for ti, mi in zip(median.times_h, median.mass_pg)]
    if median.times_h.size >= 4:
        td, r2 = doubling_time(median, fit_range)
        td_rows.append(["median", td, r2])

    _write_csv(os.path.join(args.out, "normalized_curves.csv"), ("fov", "t_h", "mass_rel"), curve_rows)
    _write_csv(
        os.path.join(args.out, "doubling_times.csv"),
        ("fov", "doubling_time_h", "r_squared"),
        td_rows,
    )
    _write_csv(os.path.join(args.out, "ncr_trace.csv"), ("fov", "t_h", "ncr", "excluded"), ncr_rows)
    _write_csv(os.path.join(args.out, "median_curve.csv"), ("t_h", "mass_rel"), median_rows)
    _write_echo(
        os.path.join(args.out, "resolved.cfg"),
        {
            "growth": {
                "masses": args.masses,
                "window_h": args.window,
                "fit_range_h": fit_range,
                "out": args.out,
                "fovs": sorted(per_fov),
                "seed": args.seed,
            }
        },
    )


# ------------------------------------------------------------------- plan


_PLATE_KEYS = {
    "wells",
    "tile_rows",
    "tile_cols",
    "tile_pitch_um",
    "field_of_view_um",
    "z_count",
    "z_step_um",
    "time_points",
}


def _parse_wells(section: str, value: str):
    wells = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise CliError("config", f"[{section}] wells: expected name:x_um:y_um, got {part!r}")
        name = bits[0].strip()
        x = _config_float(section, "wells", bits[1], positive=False)
        y = _config_float(section, "wells", bits[2], positive=False)
        wells.append(WellRegion(name, x, y))
    if not wells:
        raise CliError("config", f"[{section}] wells: no wells listed")
    return wells


def _parse_channels(section: dict):
    channels = []
    for name, value in section.items():
        bits = [b.strip() for b in value.split(":")]
        if len(bits) != 3:
            raise CliError(
                "config",
                f"[channels] {name}: expected kind:exposure_ms:stabilization_ms, got {value!r}",
            )
        kind = bits[0]
        if kind not in CHANNEL_KINDS:
            raise CliError("config", f"[channels] {name}: unknown kind {kind!r}")
        exposure = _config_float("channels", name, bits[1])
        stabilization = _config_float("channels", name, bits[2], positive=False)
        if stabilization < 0:
            raise CliError("config", f"[channels] {name}: stabilization must be >= 0")
        channels.append(ChannelSpec(name, kind, exposure, stabilization))
    if not channels:
        raise CliError("config", "[channels] section lists no channels")
    return channels


def _parse_focus(section: dict):
    unknown = set(section) - {"points"}
    if unknown:
        raise CliError("config", f"[focus] unknown keys {sorted(unknown)}")
    points = []
    for part in section.get("points", "").split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise CliError("config", f"[focus] points: expected x:y:z, got {part!r}")
        points.append(
            FocusPoint(
                _config_float("focus", "points", bits[0], positive=False),
                _config_float("focus", "points", bits[1], positive=False),
                _config_float("focus", "points", bits[2], positive=False),
            )
        )
    if not points:
        raise CliError("config", "[focus] section needs a points key")
    return FocusSurface(points)


def _cmd_plan(args) -> None:
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise CliError("config", f"no such file: {args.config}") from None
    cfg = parse_config_text(text)

    unknown = set(cfg) - {"plate", "channels", "focus"}
    if unknown:
        raise CliError("config", f"unknown sections {sorted(unknown)}")
    for required in ("plate", "channels"):
        if required not in cfg:
            raise CliError("config", f"missing [{required}] section")
    plate = cfg["plate"]
    unknown = set(plate) - _PLATE_KEYS
    if unknown:
        raise CliError("config", f"[plate] unknown keys {sorted(unknown)}")
    missing = sorted(_PLATE_KEYS - {"time_points"} - set(plate))
    if missing:
        raise CliError("config", f"[plate] missing keys {missing}")

    wells = _parse_wells("plate", plate["wells"])
    channels = _parse_channels(cfg["channels"])
    focus = _parse_focus(cfg["focus"]) if "focus" in cfg else None
    time_points = _config_int("plate", "time_points", plate.get("time_points", "1"))

    plan = ScanPlan(
        wells=tuple(wells),
        tile_rows=_config_int("plate", "tile_rows", plate["tile_rows"]),
        tile_cols=_config_int("plate", "tile_cols", plate["tile_cols"]),
        tile_pitch_um=_config_float("plate", "tile_pitch_um", plate["tile_pitch_um"]),
        field_of_view_um=_config_float("plate", "field_of_view_um", plate["field_of_view_um"]),
        z_count=_config_int("plate", "z_count", plate["z_count"]),
        z_step_um=_config_float("plate", "z_step_um", plate["z_step_um"]),
        channels=tuple(channels),
    )
    events = list(plan.events(focus))
    lines = [json.dumps(e._asdict()) for e in events]
    _write_text(args.out, "\n".join(lines) + "\n")

    echo: dict = {"plate": dict(plate), "channels": dict(cfg["channels"])}
    echo["plate"].setdefault("time_points", str(time_points))
    if "focus" in cfg:
        echo["focus"] = dict(cfg["focus"])
    echo["plan"] = {"config": args.config, "out": args.out, "seed": args.seed}
    _write_echo(args.out + ".cfg", echo)

    print(
        json.dumps(
            {
                "events_per_pass": len(events),
                "time_points": time_points,
                "phase_images_total": plan.phase_image_count(time_points),
                "wells": len(wells),
            },
            sort_keys=True,
        )
    )


# ------------------------------------------------------- simulate-pipeline


def _cmd_simulate_pipeline(args) -> None:
    factory = glim_profile if args.profile == "glim" else slim_profile
    profile = factory(args.channels)
    sliding = not args.no_sliding
    timeline = simulate_frames(profile, args.frames, sliding=sliding, fused=args.fused)
    _write_csv(
        args.out,
        ("stage", "frame", "start_ms", "end_ms"),
        [[w.stage, w.index, w.start_ms, w.end_ms] for w in timeline.windows],
    )
    report = throughput_report(
        profile, baseline_ms=args.baseline_ms, sliding=sliding, fused=args.fused
    )
    _write_echo(
        args.out + ".cfg",
        {
            "simulate-pipeline": {
                "profile": args.profile,
                "channels": args.channels,
                "frames": args.frames,
                "sliding": sliding,
                "fused": args.fused,
                "baseline_ms": args.baseline_ms,
                "out": args.out,
                "seed": args.seed,
            }
        },
    )
    print(json.dumps(report, sort_keys=True))


# --------------------------------------------------------------- evaluate


@functools.lru_cache(maxsize=8)
def _cached_weights(path: str):
    store = load_weights(path)
    return spec_from_weights(store), store


def _pair_values(task):
    """Load one manifest pair and reduce it to comparison statistics.

    Runs in worker processes under --jobs; everything it needs travels
    in the task tuple and everything it returns is picklable.
    """
    (mode, phase_path, stain_path, weights, rho_min, rho_max, net_px, normalize) = task
    left, left_meta = load_raster(phase_path)
    right, _ = load_raster(stain_path)
    if mode == "mass":
        spec, store = _cached_weights(weights)
        pred = infer_stain(left, spec, store, rho_min, rho_max, net_pixel_size=net_px)
        percent = mass_agreement(left, right, pred.raster, wavelength_um=left_meta.wavelength)
        return {"percent": percent}
    if weights is not None:
        spec, store = _cached_weights(weights)
        left = infer_stain(left, spec, store, rho_min, rho_max, net_pixel_size=net_px).raster
    a = left.data.astype(np.float64).ravel()
    b = right.data.astype(np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"pair size mismatch: {phase_path} vs {stain_path}")
    if normalize:
        for arr in (a, b):
            lo, hi = arr.min(), arr.max()
            if hi == lo:
                raise ValueError("constant image cannot be range-normalized")
            arr -= lo
            arr /= hi - lo
    acc = MomentAccumulator()
    acc.add(a, b)
    return {
        "moments": (acc.n, acc.sa, acc.sb, acc.saa, acc.sbb, acc.sab),
        "rho": acc.correlation(),
    }


def _read_manifest(path):
    rows = _read_table(path, MANIFEST_COLUMNS, "evalkit")
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for row in rows:
        extra = set(row) - set(MANIFEST_COLUMNS)
        if extra:
            raise CliError("evalkit", f"{path}: unknown columns {sorted(extra)}")
        records.append(
            {
                "phase_path": row["phase_path"],
                "stain_path": row["stain_path"],
                "fov": row["fov"],
                "z": row["z"],
                "split": row["split"],
                "phase_abs": os.path.join(base, row["phase_path"]),
                "stain_abs": os.path.join(base, row["stain_path"]),
            }
        )
    return records


def _cmd_evaluate(args) -> None:
    records = _read_manifest(args.pairs)
    if args.split is not None:
        records = [r for r in records if r["split"] == args.split]
        if not records:
            raise CliError("evalkit", f"no pairs with split {args.split!r}")
    if args.mode == "mass" and args.weights is None:
        raise CliError("evalkit", "mass mode needs --weights to produce the predicted stain")
    if args.weights is not None and (args.rho_min is None or args.rho_max is None):
        raise CliError("evalkit", "--weights needs --rho-min and --rho-max")
    if args.jobs < 1:
        raise CliError("evalkit", f"--jobs must be >= 1, got {args.jobs}")

    tasks = [
        (
            args.mode,
            r["phase_abs"],
            r["stain_abs"],
            args.weights,
            args.rho_min,
            args.rho_max,
            args.net_pixel_size,
            args.normalize,
        )
        for r in records
    ]
    if args.jobs == 1:
        results = [_pair_values(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_pair_values, tasks))

    per_pair = []
    for record, result in zip(records, results):
        entry = {k: record[k] for k in MANIFEST_COLUMNS}
        entry.update({k: v for k, v in result.items() if k != "moments"})
        per_pair.append(entry)

    report = {
        "mode": args.mode,
        "pairs": len(records),
        "weights": args.weights,
        "normalize": args.normalize,
        "per_pair": per_pair,
    }
    if args.mode == "pearson":
        pooled = MomentAccumulator()
        for result in results:
            part = MomentAccumulator()
            part.n, part.sa, part.sb, part.saa, part.sbb, part.sab = result["moments"]
            pooled = pooled.merge(part)
        rhos = [r["rho"] for r in results]
        report["pooled_rho"] = pooled.correlation()
        report["mean_rho"] = float(np.mean(rhos))
    else:
        percents = [r["percent"] for r in results]
        report["mean_percent"] = float(np.mean(percents))
        report["max_percent"] = float(np.max(percents))
    _write_json(args.out, report)
    _write_echo(
        args.out + ".cfg",
        {
            "evaluate": {
                "pairs": args.pairs,
                "mode": args.mode,
                "weights": args.weights,
                "rho_min": args.rho_min,
                "rho_max": args.rho_max,
                "net_pixel_size_um": args.net_pixel_size,
                "normalize": args.normalize,
                "split": args.split,
                "jobs": args.jobs,
                "out": args.out,
                "seed": args.seed,
            }
        },
    )


# ---------------------------------------------------------------- phantom


def _cmd_phantom(args) -> None:
    phase = make_bead_phantom(
        size=args.size,
        pixel_size=args.pixel_size,
        diameter=args.diameter,
        wavelength=args.wavelength,
        n_bead=args.n_bead,
        n_media=args.n_media,
    )
    save_raster(
        args.out,
        phase.raster,
        ImageMeta(args.wavelength, ChannelTag.PHASE, shear=args.shear),
    )
    frame_paths = []
    if args.frames_out is not None:
        fs = simulate_glim_frames(phase, background=args.background, shear=args.shear)
        for n in range(FRAME_COUNT):
            path = f"{args.frames_out}{n}.picsr1"
            save_raster(
                path,
                Raster(fs.frames[n], fs.pixel_size),
                ImageMeta(args.wavelength, ChannelTag.PHASE, shear=args.shear),
            )
            frame_paths.append(path)
    _write_echo(
        args.out + ".cfg",
        {
            "phantom": {
                "kind": "bead",
                "size_px": args.size,
                "pixel_size_um": args.pixel_size,
                "diameter_um": args.diameter,
                "wavelength_um": args.wavelength,
                "n_bead": args.n_bead,
                "n_media": args.n_media,
                "shear_um": args.shear,
                "background": args.background,
                "out": args.out,
                "frames_out": args.frames_out,
                "seed": args.seed,
            }
        },
    )
    print(
        json.dumps(
            {
                "peak_rad": bead_peak_phase(
                    args.diameter, args.wavelength, args.n_bead, args.n_media
                ),
                "out": args.out,
                "frames": frame_paths,
            },
            sort_keys=True,
        )
    )


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=0, help="seed for any randomized step (default 0)"
    )

    parser = argparse.ArgumentParser(
        prog="pics",
        description="Phase imaging with computational specificity: "
        "reconstruction, digital staining and dry-mass analytics.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"pics {__version__} (formats: {', '.join(FORMAT_VERSIONS)})",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="<command>")

    p = sub.add_parser(
        "reconstruct", parents=[common], help="recover phase from four modulation frames"
    )
    p.add_argument(
        "--frames",
        nargs="+",
        required=True,
        metavar="PATH",
        help="four frame files in modulation order (0, pi/2, pi, 3pi/2), or one glob",
    )
    p.add_argument("--shear", type=float, help="shear in um (default: frame header)")
    p.add_argument("--mode", choices=("sgn", "wiener"), default="sgn")
    p.add_argument("--lreg", type=float, help="wiener regularizer in rad/um")
    p.add_argument("--out", required=True, help="output phase image (PICSR1)")
    p.set_defaults(handler=_cmd_reconstruct)

    p = sub.add_parser("infer", parents=[common], help="digitally stain a phase image")
    p.add_argument("--phase", required=True, help="input phase image (PICSR1)")
    p.add_argument(
        "--weights",
        nargs="+",
        required=True,
        metavar="PATH",
        help="one weight file (PICSW1) per stain channel",
    )
    p.add_argument("--rho-min", type=float, required=True, help="lower phase bound, rad")
    p.add_argument("--rho-max", type=float, required=True, help="upper phase bound, rad")
    p.add_argument(
        "--net-pixel-size", type=float, help="resample to this pitch (um) before the network"
    )
    p.add_argument(
        "--channels",
        nargs="+",
        metavar="NAME",
        help="channel name per weight file (dapi, dii); default dapi then dii",
    )
    p.add_argument("--out", required=True, help="output stain image (PICSR1)")
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser(
        "segment", parents=[common], help="masks and dry masses from stain channels"
    )
    p.add_argument("--dapi", required=True, help="nuclear stain image (PICSR1)")
    p.add_argument("--dii", required=True, help="membrane stain image (PICSR1)")
    p.add_argument("--phase", required=True, help="phase image for mass integration")
    p.add_argument("--out-prefix", required=True, help="prefix for mask and table outputs")
    p.add_argument(
        "--split-depth",
        type=float,
        default=DEFAULT_SPLIT_DEPTH,
        help="peak prominence (px) for instance splitting",
    )
    p.add_argument(
        "--min-area-um2", type=float, default=0.0, help="drop instances smaller than this"
    )
    p.add_argument("--fov", help="field label for the mass table (default: phase file stem)")
    p.add_argument(
        "--time-h", type=float, help="acquisition time in hours (default: header timestamp)"
    )
    p.set_defaults(handler=_cmd_segment)

    p = sub.add_parser("growth", parents=[common], help="growth kinetics from mass tables")
    p.add_argument("--masses", required=True, help="mass table CSV from segment runs")
    p.add_argument(
        "--window", type=float, default=6.0, help="baseline window in hours (default 6)"
    )
    p.add_argument(
        "--fit-range",
        type=float,
        nargs=2,
        metavar=("T0", "T1"),
        help="restrict the doubling-time fit to this span in hours",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_growth)

    p = sub.add_parser("plan", parents=[common], help="expand a scan config into events")
    p.add_argument("--config", required=True, help="key=value config with [sections]")
    p.add_argument("--out", required=True, help="output NDJSON event list")
    p.set_defaults(handler=_cmd_plan)

    p = sub.add_parser(
        "simulate-pipeline", parents=[common], help="stage timeline for an imaging pipeline"
    )
    p.add_argument("--profile", choices=("glim", "slim"), default="glim")
    p.add_argument("--channels", type=int, default=1, help="stain channels inferred per image")
    p.add_argument("--frames", type=int, default=16, help="camera frames to simulate")
    p.add_argument(
        "--no-sliding",
        action="store_true",
        help="retire four frames per output instead of sliding the window",
    )
    p.add_argument(
        "--fused", action="store_true", help="run all compute stages on one shared worker"
    )
    p.add_argument(
        "--baseline-ms",
        type=float,
        help="per-image cost of the workflow being replaced, for speedup reporting",
    )
    p.add_argument("--out", required=True, help="output timeline CSV")
    p.set_defaults(handler=_cmd_simulate_pipeline)

    p = sub.add_parser("evaluate", parents=[common], help="agreement metrics over image pairs")
    p.add_argument("--pairs", required=True, help="manifest CSV (phase_path, stain_path, fov, z, split)")
    p.add_argument("--mode", choices=("pearson", "mass"), required=True)
    p.add_argument("--weights", help="PICSW1 weights; predict from phase_path before comparing")
    p.add_argument("--rho-min", type=float, help="lower phase bound for prediction, rad")
    p.add_argument("--rho-max", type=float, help="upper phase bound for prediction, rad")
    p.add_argument("--net-pixel-size", type=float, help="network pitch for prediction, um")
    p.add_argument(
        "--normalize", action="store_true", help="map each image to unit range before pearson"
    )
    p.add_argument(
        "--split", choices=("train", "validation", "test"), help="evaluate one split only"
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over pairs")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("phantom", parents=[common], help="synthetic calibration scenes")
    p.add_argument("--bead", action="store_true", required=True, help="spherical bead scene")
    p.add_argument("--size", type=int, default=512, help="field size in pixels")
    p.add_argument("--pixel-size", type=float, default=0.05, help="pixel pitch in um")
    p.add_argument("--diameter", type=float, default=BEAD_DIAMETER_UM, help="bead diameter, um")
    p.add_argument("--wavelength", type=float, default=DEFAULT_WAVELENGTH_UM)
    p.add_argument("--n-bead", type=float, default=BEAD_INDEX, help="bead refractive index")
    p.add_argument("--n-media", type=float, default=MEDIA_INDEX, help="media refractive index")
    p.add_argument("--shear", type=float, default=DEFAULT_SHEAR_UM, help="shear for frame synthesis")
    p.add_argument("--background", type=float, default=1.0, help="per-arm intensity for frames")
    p.add_argument("--out", default="bead.picsr1", help="output phase image")
    p.add_argument(
        "--frames-out",
        metavar="PREFIX",
        help="also write the four modulation frames as PREFIX0..3.picsr1",
    )
    p.set_defaults(handler=_cmd_phantom)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.handler(args)
    except CliError as exc:
        print(f"pics: [{exc.module}] {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        tag = _MODULE_TAGS[args.command]
        message = str(exc) or exc.__class__.__name__
        print(f"pics: [{tag}] {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
