"""Batch command line front end for the scanning pipeline.

Each subcommand reads files, runs one pipeline stage, and writes its
results under an explicit output path. Inputs are never modified, and the
same inputs plus the same seed always produce the same bytes. Lengths on
the command line carry explicit unit suffixes (10um, 1mm, 47cm, 0.5m) so
that a misread unit fails loudly instead of corrupting a scan.
"""

from __future__ import annotations

import argparse
import csv
import os
import re
import sys

import numpy as np

from .calibrate import (
    collect_ray_samples,
    fit_ray_splines,
    normalize_stack,
)
from .evaluate import (
    compare_patterns,
    depth_error_stats,
    plane_pca,
    write_comparison_csv,
    write_histogram,
)
from .geometry import fit_trajectory, project_poses
from .io import (
    FormatError,
    format_float,
    load_lut,
    read_manifest,
    read_pattern_specs,
    read_pfm,
    read_ply,
    read_rig,
    save_lut,
    write_manifest,
    write_pattern_csv,
    write_pfm,
    write_pgm,
    write_ply,
    write_ppm,
    write_rig,
)
from .patterns import (
    channel_frequencies,
    confusion_matrix,
    gen_pattern,
    min_separation,
    pattern_image,
)
from .reconstruct import DepthMap, depth_to_points, reconstruct_frame, temporal_filter
from .simulate import (
    CaptureFrame,
    PlaneScene,
    SphereScene,
    StageRange,
    noise_profile,
    render_capture,
    scene_depth,
    simulate_sweep,
)

__all__ = ["main", "parse_crop", "parse_length", "parse_range", "parse_scene"]

_LENGTH_RE = re.compile(r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(um|mm|cm|m)\Z")
_UNIT_SCALE = {"um": 1e-6, "mm": 1e-3, "cm": 1e-2, "m": 1.0}


def parse_length(text):
    """Parse a length with a mandatory unit suffix into meters.

    Accepts um, mm, cm, and m; a bare number is rejected so that a
    forgotten unit cannot silently change scale by orders of magnitude.
    """
    m = _LENGTH_RE.match(text.strip())
    if not m:
        raise ValueError(
            f"expected a length with unit suffix (10um, 1mm, 47cm, 0.5m), "
            f"got {text!r}"
        )
    return float(m.group(1)) * _UNIT_SCALE[m.group(2)]


def parse_range(text):
    """Parse "start:stop:step" of unit-suffixed lengths into a StageRange."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:step, got {text!r}")
    start, stop, step = (parse_length(p) for p in parts)
    return StageRange(start, stop, step)


def parse_crop(text):
    """Parse "x0,y0,x1,y1" of unit-suffixed lengths into a crop box."""
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"expected x0,y0,x1,y1, got {text!r}")
    x0, y0, x1, y1 = (parse_length(p) for p in parts)
    return (x0, x1, y0, y1)


def parse_scene(text):
    """Parse a scene description into a scene object.

    Supported forms, all lengths unit-suffixed:
      plane:DEPTH            fronto-parallel plane at that depth
      plane:DEPTH:HALF       same, bounded to a square of that half size
      sphere:DEPTH:RADIUS    sphere centered on the optical axis
    """
    parts = text.split(":")
    kind = parts[0]
    if kind == "plane" and len(parts) in (2, 3):
        depth = parse_length(parts[1])
        half = parse_length(parts[2]) if len(parts) == 3 else None
        return PlaneScene(point=np.array([0.0, 0.0, depth]),
                          normal=np.array([0.0, 0.0, -1.0]),
                          half_extent=half)
    if kind == "sphere" and len(parts) == 3:
        depth = parse_length(parts[1])
        radius = parse_length(parts[2])
        return SphereScene(center=np.array([0.0, 0.0, depth]), radius=radius)
    raise ValueError(
        f"cannot parse scene {text!r}; expected plane:DEPTH[:HALF] or "
        f"sphere:DEPTH:RADIUS"
    )


def _shift_scene(scene, dz):
    """The same scene translated along the optical axis."""
    if dz == 0.0:
        return scene
    offset = np.array([0.0, 0.0, dz])
    if isinstance(scene, PlaneScene):
        return PlaneScene(point=scene.point + offset, normal=scene.normal,
                          albedo=scene.albedo, half_extent=scene.half_extent)
    if isinstance(scene, SphereScene):
        return SphereScene(center=scene.center + offset, radius=scene.radius,
                           albedo=scene.albedo)
    raise ValueError(f"cannot shift scene of type {type(scene).__name__}")


def _default_seed():
    text = os.environ.get("LOOKUP3D_SEED", "0")
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"LOOKUP3D_SEED must be an integer, got {text!r}") from None


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _resolve_noise(args, rig_noise):
    """Noise model for a simulation: the --noise-profile flag, else the rig's."""
    if args.noise_profile is not None:
        return noise_profile(args.noise_profile)
    return rig_noise


# --- capture and depth map files -------------------------------------------

def _write_capture(out_dir, prefix, index, frame):
    """One PFM per image of a capture; returns the ids written."""
    for pid in frame.pattern_ids:
        image = frame.image(pid)  # [H, W, C]
        if image.shape[2] == 1:
            image = image[:, :, 0]
        write_pfm(os.path.join(out_dir, f"{prefix}-{index:04d}-{pid}.pfm"), image)
    return frame.pattern_ids


def _read_capture(directory, prefix, index, pattern_ids, exposure=1.0):
    """Rebuild a capture from the PFMs written by ``_write_capture``."""
    images = []
    for pid in pattern_ids:
        path = os.path.join(directory, f"{prefix}-{index:04d}-{pid}.pfm")
        image = read_pfm(path).astype(np.float64)
        if image.ndim == 2:
            image = image[:, :, None]
        images.append(image)
    return CaptureFrame(images=np.stack(images), pattern_ids=tuple(pattern_ids),
                        exposure=exposure)


def _write_depth_map(out_dir, index, dm):
    """Depth and residual PFMs with 0 marking invalid pixels.

    PFM cannot hold NaN, and no physical depth is 0, so 0 is a safe
    sentinel that ``_read_depth_map`` maps back to invalid.
    """
    depth = np.where(dm.valid, dm.depth, 0.0)
    residual = np.where(dm.valid, dm.residual, 0.0)
    write_pfm(os.path.join(out_dir, f"depth-{index:04d}.pfm"), depth)
    write_pfm(os.path.join(out_dir, f"residual-{index:04d}.pfm"), residual)


def _read_depth_map(directory, index):
    depth = read_pfm(os.path.join(directory, f"depth-{index:04d}.pfm"))
    depth = depth.astype(np.float64)
    if depth.ndim != 2:
        raise FormatError(f"depth-{index:04d}.pfm: expected a grayscale map")
    residual_path = os.path.join(directory, f"residual-{index:04d}.pfm")
    if os.path.exists(residual_path):
        residual = read_pfm(residual_path).astype(np.float64)
        if residual.shape != depth.shape:
            raise FormatError(
                f"residual-{index:04d}.pfm: shape {residual.shape} does not "
                f"match the depth map {depth.shape}"
            )
    else:
        residual = np.zeros_like(depth)
    valid = depth > 0.0
    depth = np.where(valid, depth, np.nan)
    residual = np.where(valid, residual, np.nan)
    return DepthMap(depth=depth, residual=residual, valid=valid)


def _read_gt(path):
    gt = read_pfm(path).astype(np.float64)
    return np.where(gt > 0.0, gt, np.nan)


# --- subcommands ------------------------------------------------------------

def cmd_gen_patterns(args):
    specs = read_pattern_specs(args.spec_file)
    out = _ensure_dir(args.out)
    for name, spec in specs:
        pattern = gen_pattern(spec)
        write_pattern_csv(os.path.join(out, f"{name}.csv"), pattern)
        strip = pattern_image(pattern)
        if pattern.channels == 3:
            write_ppm(os.path.join(out, f"{name}.ppm"), strip)
        else:
            write_pgm(os.path.join(out, f"{name}.pgm"), strip[:, :, 0])
        conf = confusion_matrix(pattern)
        write_pgm(os.path.join(out, f"{name}-confusion.pgm"), conf.entries)
        print(f"{name}: kind={spec.kind} resolution={spec.resolution} "
              f"channels={spec.channels}")
    return 0


def cmd_analyze_patterns(args):
    specs = read_pattern_specs(args.spec_file)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "kind", "resolution", "channels",
                         "exclusion_band", "min_separation",
                         "channel_frequencies"])
        for name, spec in specs:
            pattern = gen_pattern(spec)
            band = args.band if args.band is not None else max(
                1, pattern.resolution // 100)
            sep = min_separation(pattern, band)
            freqs = channel_frequencies(pattern)
            writer.writerow([
                name, spec.kind, spec.resolution, spec.channels, band,
                repr(sep), " ".join(repr(float(f)) for f in freqs),
            ])
            print(f"{name}: min_separation={sep!r} (band {band})")
    return 0


def cmd_simulate_sweep(args):
    camera, projector, rig_noise = read_rig(args.rig_file)
    noise = _resolve_noise(args, rig_noise)
    named_specs = read_pattern_specs(args.patterns)
    patterns = [gen_pattern(spec) for _, spec in named_specs]
    stage = args.range
    seed = args.seed if args.seed is not None else _default_seed()

    sweep = simulate_sweep(camera, projector, patterns, stage, noise, seed=seed)
    out = _ensure_dir(args.out)
    write_rig(os.path.join(out, "rig.txt"), camera, projector, noise)

    ids = sweep.frames[0].pattern_ids
    for k, frame in enumerate(sweep.frames):
        _write_capture(out, "frame", k, frame)

    entries = {
        "format": "sweep",
        "stage.start": format_float(stage.start),
        "stage.stop": format_float(stage.stop),
        "stage.step": format_float(stage.step),
        "seed": seed,
        "stops": len(sweep.frames),
        "patterns": " ".join(ids),
    }
    if sweep.flagged:
        entries["flagged"] = " ".join(str(k) for k in sweep.flagged)
    for k, pose in enumerate(sweep.poses):
        entries[f"pose.{k:04d}"] = " ".join(
            [format_float(pose.stage_position)]
            + [format_float(v) for v in pose.point]
            + [format_float(v) for v in pose.normal]
            + [format_float(pose.albedo)]
        )
    write_manifest(os.path.join(out, "sweep.txt"), entries)
    print(f"wrote {len(sweep.frames)} stops x {len(ids)} images to {out}")
    if sweep.flagged:
        print(f"warning: board left the view at stops {list(sweep.flagged)}",
              file=sys.stderr)
    return 0


def _read_sweep_dir(directory):
    """Load a sweep directory back into captures, poses, and the rig."""
    from .geometry import BoardPose

    manifest = os.path.join(directory, "sweep.txt")
    entries = read_manifest(manifest, required=("stops", "patterns"))
    camera, projector, noise = read_rig(os.path.join(directory, "rig.txt"))
    try:
        stops = int(entries["stops"])
    except ValueError:
        raise FormatError(f"{manifest}: stops must be an integer") from None
    ids = entries["patterns"].split()
    if stops < 1 or not ids:
        raise FormatError(f"{manifest}: empty sweep")
    frames = []
    poses = []
    for k in range(stops):
        frames.append(_read_capture(directory, "frame", k, ids))
        key = f"pose.{k:04d}"
        if key not in entries:
            raise FormatError(f"{manifest}: missing {key}")
        values = entries[key].split()
        if len(values) != 8:
            raise FormatError(
                f"{manifest}: {key} needs 8 numbers "
                f"(stage, point, normal, albedo), got {len(values)}"
            )
        nums = [float(v) for v in values]
        poses.append(BoardPose(stage_position=nums[0],
                               point=np.array(nums[1:4]),
                               normal=np.array(nums[4:7]),
                               albedo=nums[7]))
    return frames, poses, camera, projector, noise


def cmd_calibrate(args):
    frames, poses, camera, _, _ = _read_sweep_dir(args.sweep_dir)
    stacks = [normalize_stack(f, white_floor=args.white_floor) for f in frames]
    trajectory = fit_trajectory(poses)
    aligned = project_poses(trajectory, poses)
    samples = collect_ray_samples(stacks, aligned, camera)
    lut, report = fit_ray_splines(samples, smoothing=args.smoothing,
                                  min_samples=args.min_samples,
                                  workers=args.workers)
    save_lut(args.out, lut)
    if args.report is not None:
        report.write_csv(args.report)
    n_valid = int(lut.valid.sum())
    print(f"fitted {n_valid} of {lut.valid.size} pixels "
          f"(trajectory residual {trajectory.residual_rms!r} m) -> {args.out}")
    return 0


def cmd_simulate_scan(args):
    camera, projector, rig_noise = read_rig(args.rig_file)
    noise = _resolve_noise(args, rig_noise)
    named_specs = read_pattern_specs(args.lut_patterns)
    patterns = [gen_pattern(spec) for _, spec in named_specs]
    scene = parse_scene(args.scene)
    seed = args.seed if args.seed is not None else _default_seed()
    if args.frames < 1:
        raise ValueError(f"--frames must be at least 1, got {args.frames}")

    out = _ensure_dir(args.out)
    ids = None
    for f in range(args.frames):
        moved = _shift_scene(scene, f * args.motion)
        capture = render_capture(moved, camera, projector, patterns, noise,
                                 seed=[seed, f])
        ids = _write_capture(out, "scan", f, capture)
        gt = scene_depth(moved, camera)
        write_pfm(os.path.join(out, f"gt-{f:04d}.pfm"),
                  np.where(np.isfinite(gt), gt, 0.0))
    entries = {
        "format": "scan",
        "frames": args.frames,
        "patterns": " ".join(ids),
        "seed": seed,
        "scene": args.scene,
        "motion": format_float(args.motion),
    }
    write_manifest(os.path.join(out, "scan.txt"), entries)
    print(f"wrote {args.frames} frames x {len(ids)} images to {out}")
    return 0


def cmd_reconstruct(args):
    lut = load_lut(args.lut_file)
    manifest = os.path.join(args.scan_dir, "scan.txt")
    entries = read_manifest(manifest, required=("frames", "patterns"))
    try:
        n_frames = int(entries["frames"])
    except ValueError:
        raise FormatError(f"{manifest}: frames must be an integer") from None
    ids = entries["patterns"].split()

    out = _ensure_dir(args.out)
    recon = {"format": "reconstruction", "frames": n_frames,
             "step": format_float(args.step)}
    for f in range(n_frames):
        capture = _read_capture(args.scan_dir, "scan", f, ids)
        stack = normalize_stack(capture, white_floor=args.white_floor)
        dm = reconstruct_frame(lut, stack, step=args.step,
                               residual_reject=args.residual_reject,
                               workers=args.workers, refine=args.refine)
        _write_depth_map(out, f, dm)
        if args.ply != "none":
            cloud = depth_to_points(dm, lut.camera)
            write_ply(os.path.join(out, f"cloud-{f:04d}.ply"), cloud,
                      binary=args.ply == "binary")
        prefix = f"frame.{f:04d}"
        recon[f"{prefix}.valid_fraction"] = format_float(
            dm.valid.sum() / dm.valid.size)
        recon[f"{prefix}.rejected"] = dm.stats.n_rejected
        recon[f"{prefix}.wall_seconds"] = format_float(dm.stats.wall_seconds)
        recon[f"{prefix}.pixels_per_second"] = format_float(
            dm.stats.pixels_per_second)
        gt_path = os.path.join(args.scan_dir, f"gt-{f:04d}.pfm")
        if os.path.exists(gt_path):
            stats = depth_error_stats(dm, _read_gt(gt_path))
            recon[f"{prefix}.rms_vs_gt"] = format_float(stats.rms)
        print(f"frame {f}: {float(dm.valid.sum() / dm.valid.size):.1%} valid, "
              f"{dm.stats.pixels_per_second:.0f} px/s")
    write_manifest(os.path.join(out, "recon.txt"), recon)
    return 0


def cmd_filter_sequence(args):
    indices = []
    pat = re.compile(r"depth-(\d{4})\.pfm\Z")
    for entry in sorted(os.listdir(args.depth_dir)):
        m = pat.match(entry)
        if m:
            indices.append(int(m.group(1)))
    if not indices:
        raise ValueError(f"no depth-NNNN.pfm files in {args.depth_dir}")
    maps = [_read_depth_map(args.depth_dir, k) for k in indices]
    filtered = temporal_filter(maps, max_jump=args.max_jump)
    out = _ensure_dir(args.out)
    entries = {"format": "filtered", "frames": len(filtered),
               "max_jump": format_float(args.max_jump)}
    for k, dm in zip(indices, filtered):
        _write_depth_map(out, k, dm)
        if dm.flags:
            entries[f"frame.{k:04d}.flags"] = " ".join(dm.flags)
    write_manifest(os.path.join(out, "filter.txt"), entries)
    print(f"filtered {len(filtered)} frames -> {out}")
    return 0


def cmd_evaluate_plane(args):
    cloud = read_ply(args.cloud)
    report = plane_pca(cloud, args.crop)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_points", "sigma_m",
                         "point_x", "point_y", "point_z",
                         "normal_x", "normal_y", "normal_z"])
        writer.writerow([report.n_points, repr(report.sigma)]
                        + [repr(float(v)) for v in report.point]
                        + [repr(float(v)) for v in report.normal])
    if args.hist is not None:
        write_histogram(args.hist, report)
    print(f"plane sigma {report.sigma * 1e6:.2f} um over {report.n_points} points")
    return 0


def cmd_compare_patterns(args):
    specs = read_pattern_specs(args.spec_file)
    camera, projector, rig_noise = read_rig(args.rig_file)
    noise = _resolve_noise(args, rig_noise)
    seed = args.seed if args.seed is not None else _default_seed()
    seeds = tuple(seed + k for k in range(args.seeds))
    comparisons = compare_patterns(
        specs, camera, projector, args.range,
        scan_depth=args.scan_depth, noise=noise, seeds=seeds, step=args.step,
        residual_reject=args.residual_reject, crop=args.crop,
        separation_band=args.band, green_rule=not args.no_green_rule,
        workers=args.workers,
    )
    out = _ensure_dir(args.out)
    write_comparison_csv(os.path.join(out, "comparison.csv"), comparisons)
    for comp in sorted(comparisons, key=lambda c: c.sigma_mean):
        print(f"{comp.name}: sigma {comp.sigma_mean * 1e6:.1f} um, "
              f"min separation {comp.min_separation:.4f}")
    return 0


# --- parser -----------------------------------------------------------------

def _length_arg(text):
    try:
        return parse_length(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _range_arg(text):
    try:
        return parse_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _crop_arg(text):
    try:
        return parse_crop(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_workers(parser):
    parser.add_argument("--workers", type=int, default=None,
                        help="process count; -1 for all cores (default 1)")


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default $LOOKUP3D_SEED or 0)")


def _add_noise(parser):
    parser.add_argument("--noise-profile", default=None,
                        choices=["none", "low", "moderate", "high"],
                        help="override the rig file's noise model")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lutscan",
        description="Structured light scanning with per-pixel color lookup.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-patterns",
                       help="render pattern images, samples, and confusion maps")
    p.add_argument("spec_file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_patterns)

    p = sub.add_parser("analyze-patterns",
                       help="score patterns by worst-case color separation")
    p.add_argument("spec_file")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--band", type=int, default=None,
                   help="exclusion band in samples (default 1%% of resolution)")
    p.set_defaults(func=cmd_analyze_patterns)

    p = sub.add_parser("simulate-sweep",
                       help="render the calibration sweep of a flat board")
    p.add_argument("rig_file")
    p.add_argument("--patterns", required=True, help="pattern spec file")
    p.add_argument("--range", required=True, type=_range_arg,
                   metavar="START:STOP:STEP", help="stage range, e.g. 44cm:51cm:150um")
    p.add_argument("--out", required=True, help="output directory")
    _add_noise(p)
    _add_seed(p)
    p.set_defaults(func=cmd_simulate_sweep)

    p = sub.add_parser("calibrate",
                       help="fit the per-pixel depth-to-color table from a sweep")
    p.add_argument("sweep_dir")
    p.add_argument("--out", required=True, help="output table file")
    p.add_argument("--smoothing", type=float, default=0.0,
                   help="spline residual budget, 0 interpolates (default 0)")
    p.add_argument("--min-samples", type=int, default=4,
                   help="fewest sweep samples to fit a pixel (default 4)")
    p.add_argument("--white-floor", type=float, default=0.02,
                   help="minimum usable white level (default 0.02)")
    p.add_argument("--report", default=None,
                   help="also write per-pixel fit diagnostics CSV here")
    _add_workers(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate-scan", help="render scan frames of a scene")
    p.add_argument("rig_file")
    p.add_argument("--scene", required=True,
                   help="plane:DEPTH[:HALF] or sphere:DEPTH:RADIUS")
    p.add_argument("--lut-patterns", required=True,
                   help="pattern spec file the table was calibrated with")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--motion", type=_length_arg, default=0.0,
                   metavar="LENGTH", help="scene shift per frame along the axis")
    p.add_argument("--out", required=True, help="output directory")
    _add_noise(p)
    _add_seed(p)
    p.set_defaults(func=cmd_simulate_scan)

    p = sub.add_parser("reconstruct",
                       help="depth maps and point clouds from scan frames")
    p.add_argument("lut_file")
    p.add_argument("scan_dir")
    p.add_argument("--step", type=_length_arg, default=1e-5,
                   metavar="LENGTH", help="depth grid spacing (default 10um)")
    p.add_argument("--residual-reject", type=float, default=0.05,
                   help="drop matches with color distance above this (default 0.05)")
    p.add_argument("--white-floor", type=float, default=0.02,
                   help="minimum usable white level (default 0.02)")
    p.add_argument("--refine", action="store_true",
                   help="parabolic sub-step refinement of each match")
    p.add_argument("--ply", choices=["binary", "ascii", "none"], default="binary",
                   help="point cloud output format (default binary)")
    p.add_argument("--out", required=True, help="output directory")
    _add_workers(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("filter-sequence",
                       help="temporal filter over a reconstructed sequence")
    p.add_argument("depth_dir")
    p.add_argument("--max-jump", type=_length_arg, default=0.01,
                   metavar="LENGTH", help="largest believable jump (default 1cm)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_filter_sequence)

    p = sub.add_parser("evaluate-plane",
                       help="PCA plane fit and deviation spread of a cloud")
    p.add_argument("cloud", help="PLY point cloud")
    p.add_argument("--crop", type=_crop_arg, default=None,
                   metavar="X0,Y0,X1,Y1", help="keep only points in this box")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--hist", default=None,
                   help="also write the deviation histogram here")
    p.set_defaults(func=cmd_evaluate_plane)

    p = sub.add_parser("compare-patterns",
                       help="rank pattern designs by plane precision under noise")
    p.add_argument("spec_file")
    p.add_argument("rig_file")
    p.add_argument("--range", required=True, type=_range_arg,
                   metavar="START:STOP:STEP", help="calibration sweep range")
    p.add_argument("--scan-depth", type=_length_arg, default=None,
                   metavar="LENGTH", help="probe plane depth (default mid range)")
    p.add_argument("--seeds", type=int, default=5,
                   help="number of noisy scans per pattern (default 5)")
    p.add_argument("--step", type=_length_arg, default=2e-5,
                   metavar="LENGTH", help="depth grid spacing (default 20um)")
    p.add_argument("--residual-reject", type=float, default=0.05)
    p.add_argument("--crop", type=_crop_arg, default=None, metavar="X0,Y0,X1,Y1")
    p.add_argument("--band", type=int, default=None,
                   help="separation exclusion band (default 1%% of resolution)")
    p.add_argument("--no-green-rule", action="store_true",
                   help="keep channel order as specified")
    p.add_argument("--out", required=True, help="output directory")
    _add_noise(p)
    _add_seed(p)
    _add_workers(p)
    p.set_defaults(func=cmd_compare_patterns)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"lutscan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
