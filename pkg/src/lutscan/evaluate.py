"""Accuracy evaluation: plane fits, error statistics, pattern shootouts.

The standard precision probe for a scanner is a flat target: fit a plane
to the reconstructed cloud and measure the spread of signed deviations.
``compare_patterns`` runs that probe end to end for several patterns
under identical conditions, which is how pattern designs are ranked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .calibrate import collect_ray_samples, fit_ray_splines, normalize_stack
from .patterns import assign_channels, gen_pattern, min_separation
from .reconstruct import PointCloud, depth_to_points, reconstruct_frame
from .simulate import (
    NoiseModel,
    PlaneScene,
    StageRange,
    noise_profile,
    render_capture,
    simulate_sweep,
)
from .geometry import fit_trajectory, project_poses
from .validation import check_array, check_positive

__all__ = [
    "ErrorStats",
    "PatternComparison",
    "PlaneFitReport",
    "compare_patterns",
    "depth_error_stats",
    "plane_pca",
    "write_comparison_csv",
    "write_histogram",
]


@dataclass(frozen=True)
class PlaneFitReport:
    """Plane fit and the spread of deviations around it."""

    point: np.ndarray  # [3], centroid of the fitted points
    normal: np.ndarray  # [3], unit, oriented toward the camera
    sigma: float  # std of signed deviations, meters
    n_points: int
    bin_edges: np.ndarray  # [B + 1], meters
    counts: np.ndarray  # [B], int64; clipped so counts sum to n_points


def plane_pca(points, crop, bin_width=5e-6, hist_range=250e-6):
    """Fit a plane by PCA and histogram the signed deviations.

    The plane passes through the centroid with normal along the direction
    of least variance. Deviations outside ``hist_range`` are clipped into
    the outermost bins so the histogram always accounts for every point.

    Parameters
    ----------
    points : PointCloud or array_like
        Cloud or raw positions of shape (N, 3).
    crop : tuple or None
        (x_min, x_max, y_min, y_max) box keeping only points inside, in
        meters. Pass None explicitly to fit every point; real scans need
        a crop to exclude the target's edges.
    bin_width : float
        Histogram bin width in meters.
    hist_range : float
        Histogram half range in meters.

    Returns
    -------
    PlaneFitReport
    """
    if isinstance(points, PointCloud):
        positions = points.positions
    else:
        positions = check_array(points, "points", shape=(None, 3))
    check_positive(bin_width, "bin_width")
    check_positive(hist_range, "hist_range")
    if crop is not None:
        x_min, x_max, y_min, y_max = (float(v) for v in crop)
        if x_max <= x_min or y_max <= y_min:
            raise ValueError(f"empty crop box {crop}")
        keep = (
            (positions[:, 0] >= x_min) & (positions[:, 0] <= x_max)
            & (positions[:, 1] >= y_min) & (positions[:, 1] <= y_max)
        )
        positions = positions[keep]
    n = positions.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 points to fit a plane, got {n}")

    centroid = positions.mean(axis=0)
    centered = positions - centroid
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    if sing[1] < 1e-12 * max(sing[0], 1.0):
        raise ValueError("points are collinear, the plane is not determined")
    normal = vt[2]
    if normal @ centroid > 0:
        normal = -normal  # camera is at the origin; face it
    signed = centered @ normal
    sigma = float(signed.std())

    n_bins = max(1, int(round(2.0 * hist_range / bin_width)))
    clipped = np.clip(signed, -hist_range, hist_range)
    counts, edges = np.histogram(clipped, bins=n_bins,
                                 range=(-hist_range, hist_range))
    return PlaneFitReport(point=centroid, normal=normal, sigma=sigma,
                          n_points=n, bin_edges=edges, counts=counts)


def write_histogram(path, report):
    """Write a deviation histogram as two columns: bin center, count.

    The format plots directly in gnuplot: ``plot 'file' with boxes``.
    """
    centers = 0.5 * (report.bin_edges[:-1] + report.bin_edges[1:])
    with open(path, "w") as fh:
        fh.write("# deviation_m count\n")
        for center, count in zip(centers, report.counts):
            fh.write(f"{float(center)!r} {int(count)}\n")


@dataclass(frozen=True)
class ErrorStats:
    """Depth error summary against ground truth."""

    rms: float
    mean_signed: float
    median_abs: float
    max_abs: float
    valid_fraction: float  # pixels valid in both maps / total pixels


def depth_error_stats(depth_map, ground_truth):
    """Compare a reconstruction against ground truth depth.

    Only pixels valid in both inputs enter the statistics; the returned
    ``valid_fraction`` reports how many that was. With no common pixels
    the error fields are NaN.

    Parameters
    ----------
    depth_map : DepthMap
    ground_truth : array_like
        Depth of shape (H, W), NaN where undefined.

    Returns
    -------
    ErrorStats
    """
    gt = check_array(ground_truth, "ground_truth", ndim=2)
    if gt.shape != depth_map.shape:
        raise ValueError(
            f"ground_truth is {gt.shape[0]} x {gt.shape[1]} but the depth "
            f"map is {depth_map.shape[0]} x {depth_map.shape[1]}"
        )
    common = depth_map.valid & np.isfinite(gt)
    total = gt.size
    if not common.any():
        nan = float("nan")
        return ErrorStats(rms=nan, mean_signed=nan, median_abs=nan,
                          max_abs=nan, valid_fraction=0.0)
    err = depth_map.depth[common] - gt[common]
    return ErrorStats(
        rms=float(np.sqrt((err ** 2).mean())),
        mean_signed=float(err.mean()),
        median_abs=float(np.median(np.abs(err))),
        max_abs=float(np.abs(err).max()),
        valid_fraction=float(common.sum() / total),
    )


@dataclass(frozen=True)
class PatternComparison:
    """One pattern's scores from a comparison run."""

    name: str
    min_separation: float
    sigmas: tuple  # plane sigma per scan seed, meters
    valid_fractions: tuple
    note: str

    @property
    def sigma_mean(self):
        return float(np.mean(self.sigmas))


def compare_patterns(specs, camera, projector, stage, scan_depth=None,
                     noise=None, seeds=(0,), step=2e-5, residual_reject=0.05,
                     crop=None, separation_band=None, green_rule=True,
                     workers=None):
    """Rank pattern designs by flat-target precision under equal conditions.

    Every pattern gets the same treatment: a noise-free calibration
    sweep, then one scan of a fronto-parallel plane per seed with the
    given sensor noise, ending in a PCA plane fit. Differences in the
    resulting sigma isolate the pattern design, because noise is the only
    randomness and it is matched across patterns seed by seed.

    Parameters
    ----------
    specs : sequence of (str, PatternSpec)
        Names and specs of the candidate patterns.
    camera : CameraModel
    projector : ProjectorModel
    stage : StageRange
        Calibration sweep range.
    scan_depth : float, optional
        Depth of the probe plane; defaults to mid range, between stops.
    noise : NoiseModel or str, optional
        Sensor noise for the scans, as a model or a profile name
        (calibration stays noise free).
    seeds : sequence of int
        One scan per seed.
    step : float
        Reconstruction grid spacing in meters.
    residual_reject : float or None
    crop : tuple or None
        Plane fit crop box, see ``plane_pca``.
    separation_band : int, optional
        Exclusion band for the min separation score; defaults to 1% of
        the pattern resolution.
    green_rule : bool
        Route each 3 channel pattern's busiest signal to green first.
    workers : int, optional

    Returns
    -------
    list of PatternComparison
    """
    if not isinstance(stage, StageRange):
        raise TypeError(f"stage must be a StageRange, got {type(stage).__name__}")
    if isinstance(noise, str):
        noise = noise_profile(noise)
    noise = noise or NoiseModel()
    positions = stage.positions()
    if scan_depth is None:
        # Mid range, offset half a step so the plane falls between stops.
        scan_depth = float(positions[len(positions) // 2] + stage.step / 2.0)
    check_positive(scan_depth, "scan_depth")
    if not positions[0] < scan_depth < positions[-1]:
        raise ValueError(
            f"scan_depth {scan_depth} outside the calibrated range "
            f"[{positions[0]}, {positions[-1]}]"
        )
    note = ("noise-free scans: sigmas reflect grid quantization only, not "
            "pattern quality" if noise.silent else "")

    results = []
    for name, spec in specs:
        pattern = gen_pattern(spec)
        if green_rule and pattern.channels == 3:
            pattern = assign_channels(pattern)
        band = separation_band
        if band is None:
            band = max(1, pattern.resolution // 100)
        separation = min_separation(pattern, band)

        sweep = simulate_sweep(camera, projector, [pattern], stage)
        stacks = [normalize_stack(f) for f in sweep.frames]
        trajectory = fit_trajectory(sweep.poses)
        poses = project_poses(trajectory, sweep.poses)
        samples = collect_ray_samples(stacks, poses, camera)
        lut, _ = fit_ray_splines(samples, workers=workers)

        scene = PlaneScene(point=np.array([0.0, 0.0, scan_depth]),
                           normal=np.array([0.0, 0.0, -1.0]))
        sigmas = []
        fractions = []
        for seed in seeds:
            capture = render_capture(scene, camera, projector, [pattern],
                                     noise, seed=seed)
            stack = normalize_stack(capture)
            dm = reconstruct_frame(lut, stack, step=step,
                                   residual_reject=residual_reject,
                                   workers=workers)
            cloud = depth_to_points(dm, camera)
            report = plane_pca(cloud, crop)
            sigmas.append(report.sigma)
            fractions.append(float(dm.valid.sum() / dm.valid.size))
        results.append(PatternComparison(
            name=name, min_separation=separation, sigmas=tuple(sigmas),
            valid_fractions=tuple(fractions), note=note,
        ))
    return results


def write_comparison_csv(path, comparisons):
    """Comparison results as CSV, one row per pattern."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "min_separation", "sigma_mean",
                         "sigma_per_seed", "valid_fraction_mean", "note"])
        for comp in comparisons:
            writer.writerow([
                comp.name,
                repr(comp.min_separation),
                repr(comp.sigma_mean),
                " ".join(repr(s) for s in comp.sigmas),
                repr(float(np.mean(comp.valid_fractions))),
                comp.note,
            ])
