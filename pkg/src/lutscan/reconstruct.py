"""Depth recovery by matching observed colors against calibrated splines.

For each pixel the lookup table predicts color as a function of depth.
Reconstruction samples that function on a fine depth grid and picks the
depth whose predicted color is nearest (L2) to the observation. No
triangulation is involved; accuracy comes from the density of the grid
and the fidelity of the calibration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from ._parallel import get_shared, parallel_map
from .calibrate import NormalizedStack, RayLUT, RayView
from .geometry import camera_rays
from .validation import check_array, check_positive

__all__ = [
    "DepthMap",
    "PointCloud",
    "ReconStats",
    "depth_grid",
    "depth_to_points",
    "lookup_depth",
    "reconstruct_frame",
    "temporal_filter",
]

_SPLINE_DEGREE = 3
# Pixels per work unit; fixed so that the chunk decomposition, and hence
# every floating point result, is independent of the worker count.
_CHUNK = 256


@dataclass(frozen=True)
class ReconStats:
    """Throughput accounting for one reconstruction."""

    wall_seconds: float
    n_pixels: int
    n_rejected: int

    @property
    def pixels_per_second(self):
        if self.wall_seconds <= 0.0:
            return float("inf")
        return self.n_pixels / self.wall_seconds


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth along the camera rays.

    Depth is distance along each pixel's unit ray, NaN where invalid.
    ``residual`` holds the color distance at the matched depth, the
    bookkeeping for how trustworthy each pixel is.
    """

    depth: np.ndarray  # [H, W], float64, NaN where invalid
    residual: np.ndarray  # [H, W], float64, NaN where invalid
    valid: np.ndarray  # [H, W], bool
    flags: tuple = ()
    stats: ReconStats = None

    def __post_init__(self):
        depth = check_array(self.depth, "depth", ndim=2)
        residual = check_array(self.residual, "residual", shape=depth.shape)
        valid = check_array(self.valid, "valid", shape=depth.shape, dtype=bool)
        if np.any(valid & ~np.isfinite(depth)):
            raise ValueError("valid pixels must have finite depth")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "residual", residual)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class PointCloud:
    """3D points lifted from a depth map."""

    positions: np.ndarray  # [N, 3], float64
    residuals: np.ndarray  # [N], float64
    pixels: np.ndarray  # [N, 2], int64, columns (i, j); -1 when unknown

    def __post_init__(self):
        positions = check_array(self.positions, "positions", shape=(None, 3))
        n = positions.shape[0]
        residuals = check_array(self.residuals, "residuals", shape=(n,))
        pixels = check_array(self.pixels, "pixels", shape=(n, 2), dtype=np.int64)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "pixels", pixels)

    def __len__(self):
        return self.positions.shape[0]


def depth_grid(depth_lo, depth_hi, step):
    """Search positions depth_lo, depth_lo + step, ... through depth_hi.

    The endpoint is included when the range is a whole number of steps,
    robust to floating point rounding of the range width.
    """
    check_positive(step, "step")
    if not depth_hi >= depth_lo:
        raise ValueError(f"need depth_hi >= depth_lo, got [{depth_lo}, {depth_hi}]")
    count = int(math.floor((depth_hi - depth_lo) / step + 1e-9)) + 1
    return depth_lo + step * np.arange(count)


def lookup_depth(ray, color, step=1e-5):
    """Brute-force nearest-color depth for one pixel.

    Evaluates the ray's spline on a uniform depth grid and returns the
    grid depth whose predicted color is closest to ``color`` in L2. Ties
    resolve to the smaller depth. The returned residual is that smallest
    color distance.

    Parameters
    ----------
    ray : RayView
        From ``RayLUT.ray``.
    color : array_like
        Observed normalized color, shape (K,).
    step : float
        Grid spacing in depth units (meters).

    Returns
    -------
    (float, float)
        Matched depth and its color residual.
    """
    if not isinstance(ray, RayView):
        raise TypeError(f"ray must be a RayView, got {type(ray).__name__}")
    color = check_array(color, "color", shape=(len(ray.splines),))
    grid = depth_grid(ray.depth_lo, ray.depth_hi, step)
    predicted = ray.color_at(grid)  # [n, K]
    sq = ((predicted - color) ** 2).sum(axis=1)
    idx = int(np.argmin(sq))  # first minimum = smallest depth on ties
    return float(grid[idx]), float(np.sqrt(sq[idx]))


def reconstruct_frame(lut, stack, step=1e-5, residual_reject=0.05,
                      workers=None, refine=False):
    """Reconstruct a depth map from one normalized capture.

    Every pixel valid in both the table and the stack is matched by
    brute-force grid search over its calibrated depth range. Pixels whose
    best color match is still worse than ``residual_reject`` are dropped:
    a poor match means the observation does not look like any depth this
    pixel was calibrated for.

    Parameters
    ----------
    lut : RayLUT
    stack : NormalizedStack
        Channel layout must match the table's.
    step : float
        Depth grid spacing in meters.
    residual_reject : float or None
        Color distance above which a match is discarded; None keeps all.
    workers : int, optional
        Process count; the result is bit-identical for any value.
    refine : bool
        Refine each match by a parabolic fit through the three grid
        points around the minimum. Off by default: the raw grid result is
        the documented contract, refinement is an accuracy extra.

    Returns
    -------
    DepthMap
    """
    if not isinstance(lut, RayLUT):
        raise TypeError(f"lut must be a RayLUT, got {type(lut).__name__}")
    if not isinstance(stack, NormalizedStack):
        raise TypeError(f"stack must be a NormalizedStack, got {type(stack).__name__}")
    check_positive(step, "step")
    if residual_reject is not None:
        check_positive(residual_reject, "residual_reject")
    h, w = lut.valid.shape
    if stack.data.shape[:2] != (h, w):
        raise ValueError(
            f"stack is {stack.data.shape[0]} x {stack.data.shape[1]} but the "
            f"table is {h} x {w}"
        )
    if stack.n_channels != lut.n_channels:
        raise ValueError(
            f"stack has {stack.n_channels} channels but the table expects "
            f"{lut.n_channels}"
        )
    if stack.channel_ids != lut.channel_ids:
        raise ValueError(
            f"stack channels {stack.channel_ids} do not match table "
            f"channels {lut.channel_ids}"
        )

    start = time.perf_counter()
    valid = lut.valid & stack.valid
    flat = np.flatnonzero(valid.ravel())  # row-major pixel order
    chunks = [(a, min(a + _CHUNK, flat.size)) for a in range(0, flat.size, _CHUNK)]
    results = parallel_map(
        _reconstruct_chunk, chunks,
        shared=(lut, stack.data, flat, float(step), bool(refine)),
        workers=workers,
    )

    depth = np.full((h, w), np.nan)
    residual = np.full((h, w), np.nan)
    if results:
        depth.ravel()[flat] = np.concatenate([r[0] for r in results])
        residual.ravel()[flat] = np.concatenate([r[1] for r in results])
    if residual_reject is not None:
        rejected = valid & (residual > residual_reject)
        depth[rejected] = np.nan
        residual[rejected] = np.nan
        valid = valid & ~rejected
    else:
        rejected = np.zeros_like(valid)
    wall = time.perf_counter() - start
    stats = ReconStats(wall_seconds=wall, n_pixels=int(flat.size),
                       n_rejected=int(rejected.sum()))
    return DepthMap(depth=depth, residual=residual, valid=valid, stats=stats)


def _reconstruct_chunk(bounds):
    lut, data, flat, step, refine = get_shared()
    a, b = bounds
    width = lut.width
    depths = np.empty(b - a)
    residuals = np.empty(b - a)
    for n, q in enumerate(flat[a:b]):
        j, i = divmod(int(q), width)
        grid = depth_grid(lut.depth_lo[j, i], lut.depth_hi[j, i], step)
        predicted = _eval_pixel_splines(lut, j, i, grid)  # [n, K]
        target = data[j, i].astype(np.float64)
        sq = ((predicted - target) ** 2).sum(axis=1)
        idx = int(np.argmin(sq))
        d = grid[idx]
        r2 = sq[idx]
        if refine and 0 < idx < sq.size - 1:
            d, r2 = _parabolic_refine(lut, j, i, grid, sq, idx, target)
        depths[n] = d
        residuals[n] = np.sqrt(r2)
    return depths, residuals


def _eval_pixel_splines(lut, j, i, grid):
    """Predicted colors of one pixel on a depth grid, shape (n, K)."""
    k = lut.n_channels
    t0, c0 = lut._slices(j, i, 0)
    slices = [(t0, c0)]
    stacked = True
    for c in range(1, k):
        t, co = lut._slices(j, i, c)
        slices.append((t, co))
        stacked = stacked and t.size == t0.size and np.array_equal(t, t0)
    if stacked:
        coefs = np.stack([co for _, co in slices], axis=1)  # [ncoef, K]
        return BSpline.construct_fast(t0, coefs, _SPLINE_DEGREE)(grid)
    cols = [BSpline.construct_fast(t, co, _SPLINE_DEGREE)(grid)
            for t, co in slices]
    return np.stack(cols, axis=1)


def _parabolic_refine(lut, j, i, grid, sq, idx, target):
    """Quadratic interpolation of the squared residual around the minimum."""
    lo, mid, hi = sq[idx - 1], sq[idx], sq[idx + 1]
    denom = lo - 2.0 * mid + hi
    if denom <= 0.0:
        return grid[idx], mid
    shift = 0.5 * (lo - hi) / denom
    shift = float(np.clip(shift, -1.0, 1.0))
    d = grid[idx] + shift * (grid[1] - grid[0])
    predicted = _eval_pixel_splines(lut, j, i, np.array([d]))[0]
    r2 = float(((predicted - target) ** 2).sum())
    if r2 > mid:
        return grid[idx], mid
    return d, r2


def depth_to_points(depth_map, camera):
    """Lift a depth map to 3D points along the camera rays.

    Returns
    -------
    PointCloud
        Valid pixels in row-major order, with their (i, j) coordinates.
    """
    if camera is None:
        raise ValueError("camera is required to lift depths to points")
    if depth_map.shape != (camera.height, camera.width):
        raise ValueError(
            f"depth map is {depth_map.shape[0]} x {depth_map.shape[1]} but the "
            f"camera is {camera.height} x {camera.width}"
        )
    dirs = camera_rays(camera)  # [H, W, 3]
    mask = depth_map.valid
    jj, ii = np.nonzero(mask)
    positions = dirs[mask] * depth_map.depth[mask][:, None]
    pixels = np.stack([ii, jj], axis=1).astype(np.int64)
    return PointCloud(positions=positions, residuals=depth_map.residual[mask],
                      pixels=pixels)


def temporal_filter(maps, max_jump=0.01):
    """Three-frame moving average over a depth map sequence.

    Each interior frame is averaged with its two neighbors wherever all
    three agree to within ``max_jump``; larger inter-frame jumps mark a
    pixel invalid for that frame, which suppresses flicker from transient
    mismatches. The first and last frames have no two neighbors and are
    passed through unchanged, flagged "unfiltered".

    Parameters
    ----------
    maps : sequence of DepthMap
        At least one map, identical shapes.
    max_jump : float
        Largest believable frame-to-frame depth change, in meters.

    Returns
    -------
    list of DepthMap
    """
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one depth map")
    check_positive(max_jump, "max_jump")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ValueError(
                f"depth maps disagree in shape: {shape} vs {m.shape}"
            )

    out = []
    for t, m in enumerate(maps):
        if t == 0 or t == len(maps) - 1:
            out.append(DepthMap(depth=m.depth, residual=m.residual,
                                valid=m.valid, flags=m.flags + ("unfiltered",)))
            continue
        prev, cur, nxt = maps[t - 1], m, maps[t + 1]
        with np.errstate(invalid="ignore"):
            valid = prev.valid & cur.valid & nxt.valid
            valid &= np.abs(cur.depth - prev.depth) <= max_jump
            valid &= np.abs(cur.depth - nxt.depth) <= max_jump
        depth = np.full(shape, np.nan)
        residual = np.full(shape, np.nan)
        # Anchor the mean at the current frame: a static pixel comes back
        # bit for bit, and symmetric motion cancels before the division.
        depth[valid] = cur.depth[valid] + (
            (prev.depth[valid] - cur.depth[valid])
            + (nxt.depth[valid] - cur.depth[valid])) / 3.0
        residual[valid] = cur.residual[valid] + (
            (prev.residual[valid] - cur.residual[valid])
            + (nxt.residual[valid] - cur.residual[valid])) / 3.0
        out.append(DepthMap(depth=depth, residual=residual, valid=valid,
                            flags=m.flags))
    return out
