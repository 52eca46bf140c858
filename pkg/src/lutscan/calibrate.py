"""Calibration: from sweep captures to a per-pixel color-to-depth table.

Each camera pixel watches the calibration board slide through the working
range and records the projected color at every known depth. Normalizing
by the white frame cancels albedo, shading, and projector falloff, so the
remaining color depends only on depth. A cubic spline per pixel and
channel then models color as a function of depth; the collection of
splines is the lookup table that reconstruction inverts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, splrep

from ._parallel import get_shared, parallel_map, resolve_workers, split_blocks
from .geometry import plane_depth_grid
from .simulate import CaptureFrame
from .validation import check_array, check_positive

__all__ = [
    "FitReport",
    "NormalizedStack",
    "RayLUT",
    "RaySamples",
    "RayView",
    "collect_ray_samples",
    "fit_ray_splines",
    "noise_scaled_smoothing",
    "normalize_stack",
]

_SPLINE_DEGREE = 3


@dataclass(frozen=True)
class NormalizedStack:
    """Per-pixel normalized colors for one capture.

    ``data[j, i]`` holds the concatenated normalized channels of every
    signal pattern. Values are stored as float32: the normalization
    itself carries sensor noise far above float32 resolution, and the
    coarser rounding makes the result invariant to rescaling all raw
    frames by a common exposure factor.
    """

    data: np.ndarray  # [H, W, K], float32
    valid: np.ndarray  # [H, W], bool
    channel_ids: tuple  # K strings, "<pattern_id>:<channel>"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.float32:
            raise ValueError(f"data must be float32, got {data.dtype}")
        if data.ndim != 3:
            raise ValueError(f"data must have 3 dimensions, got {data.ndim}")
        valid = check_array(self.valid, "valid", shape=data.shape[:2], dtype=bool)
        ids = tuple(str(c) for c in self.channel_ids)
        if len(ids) != data.shape[2]:
            raise ValueError(
                f"got {data.shape[2]} data channels but {len(ids)} channel_ids"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "channel_ids", ids)

    @property
    def n_channels(self):
        return self.data.shape[2]


def normalize_stack(frame, ambient=None, white_floor=0.02):
    """Normalize a capture against its white frame.

    Computes (I - ambient) / (white - ambient) per pixel and channel,
    which cancels everything multiplicative (albedo, shading, projector
    falloff) and leaves pure pattern color. Pixels whose white signal
    falls below ``white_floor`` in any channel are marked invalid: they
    saw too little projector light for the ratio to mean anything.

    Parameters
    ----------
    frame : CaptureFrame
        Must contain a "white" image; an "ambient" image, when present,
        supplies the default ambient estimate.
    ambient : None, float, or array, optional
        Ambient light to subtract. None uses the frame's ambient image
        if present, else zero.
    white_floor : float
        Minimum usable white signal after ambient subtraction.

    Returns
    -------
    NormalizedStack
    """
    if not isinstance(frame, CaptureFrame):
        raise TypeError(f"frame must be a CaptureFrame, got {type(frame).__name__}")
    if "white" not in frame.pattern_ids:
        raise ValueError(
            f"capture has no 'white' image to normalize by, got {frame.pattern_ids}"
        )
    check_positive(white_floor, "white_floor")
    p, h, w, c = frame.images.shape
    if ambient is None:
        ambient = frame.image("ambient") if "ambient" in frame.pattern_ids else 0.0
    ambient = np.broadcast_to(np.asarray(ambient, dtype=np.float64), (h, w, c))

    white = frame.image("white") - ambient  # [H, W, C]
    valid = white.min(axis=2) >= white_floor
    denom = np.where(white > 1e-12, white, 1.0)

    signal_ids = [pid for pid in frame.pattern_ids if pid not in ("white", "ambient")]
    if not signal_ids:
        raise ValueError("capture holds only reference images, nothing to normalize")
    parts = []
    ids = []
    for pid in signal_ids:
        num = np.clip(frame.image(pid) - ambient, 0.0, None)
        parts.append((num / denom).astype(np.float32))
        ids.extend(f"{pid}:{k}" for k in range(c))
    data = np.concatenate(parts, axis=2)  # [H, W, K]
    data[~valid] = 0.0
    return NormalizedStack(data=data, valid=valid, channel_ids=tuple(ids))


@dataclass(frozen=True)
class RaySamples:
    """Depth and color samples gathered along every pixel ray."""

    depths: np.ndarray  # [S, H, W], float64, NaN where invalid
    colors: np.ndarray  # [S, H, W, K], float32
    valid: np.ndarray  # [S, H, W], bool
    channel_ids: tuple
    camera: object = None  # CameraModel the samples were collected with

    @property
    def n_stops(self):
        return self.depths.shape[0]

    def for_pixel(self, i, j):
        """Valid (depths, colors) of pixel (i, j), sorted by depth.

        Returns
        -------
        (numpy.ndarray, numpy.ndarray)
            Shapes (n,) float64 and (n, K) float64.
        """
        mask = self.valid[:, j, i]
        d = self.depths[mask, j, i]
        c = self.colors[mask, j, i, :].astype(np.float64)
        order = np.argsort(d, kind="stable")
        return d[order], c[order]


def collect_ray_samples(stacks, poses, camera):
    """Pair every stack with its board depth along each pixel ray.

    Parameters
    ----------
    stacks : sequence of NormalizedStack
        One per sweep stop, identical shapes and channel layout.
    poses : sequence of BoardPose
        Board plane at each stop, same order and length as ``stacks``.
    camera : CameraModel

    Returns
    -------
    RaySamples
    """
    if len(stacks) != len(poses):
        raise ValueError(
            f"got {len(stacks)} stacks but {len(poses)} poses"
        )
    if not stacks:
        raise ValueError("need at least one stack")
    first = stacks[0]
    for s in stacks[1:]:
        if s.data.shape != first.data.shape or s.channel_ids != first.channel_ids:
            raise ValueError("stacks disagree in shape or channel layout")
    h, w, k = first.data.shape
    if camera.height != h or camera.width != w:
        raise ValueError(
            f"stacks are {h} x {w} but the camera is "
            f"{camera.height} x {camera.width}"
        )

    n = len(stacks)
    depths = np.full((n, h, w), np.nan)
    colors = np.empty((n, h, w, k), dtype=np.float32)
    valid = np.zeros((n, h, w), dtype=bool)
    for s, (stack, pose) in enumerate(zip(stacks, poses)):
        grid = plane_depth_grid(camera, pose.point, pose.normal)  # [H, W]
        ok = stack.valid & np.isfinite(grid)
        depths[s] = grid
        colors[s] = stack.data
        valid[s] = ok
    return RaySamples(depths=depths, colors=colors, valid=valid,
                      channel_ids=first.channel_ids, camera=camera)


@dataclass(frozen=True)
class RayView:
    """The fitted color model of a single pixel ray."""

    pixel: tuple  # (i, j)
    depth_lo: float
    depth_hi: float
    splines: tuple  # one BSpline per channel

    def color_at(self, depths):
        """Model color at the given depths, shape (n, K)."""
        depths = np.atleast_1d(np.asarray(depths, dtype=np.float64))
        return np.stack([s(depths) for s in self.splines], axis=-1)


@dataclass(eq=False)
class RayLUT:
    """Per-pixel depth-to-color splines over the calibrated range.

    Ragged spline storage: pixel (i, j) channel c owns the slices
    ``knots_flat[knot_offsets[q]:knot_offsets[q + 1]]`` and likewise in
    ``coefs_flat``, where q = (j * width + i) * K + c. Invalid pixels own
    empty slices.
    """

    camera: object  # CameraModel
    channel_ids: tuple
    valid: np.ndarray  # [H, W], bool
    depth_lo: np.ndarray  # [H, W], float64, NaN where invalid
    depth_hi: np.ndarray  # [H, W], float64
    knot_offsets: np.ndarray  # [H * W * K + 1], int64
    knots_flat: np.ndarray  # float64
    coef_offsets: np.ndarray  # [H * W * K + 1], int64
    coefs_flat: np.ndarray  # float64

    @property
    def height(self):
        return self.valid.shape[0]

    @property
    def width(self):
        return self.valid.shape[1]

    @property
    def n_channels(self):
        return len(self.channel_ids)

    @property
    def depth_range(self):
        """Global (min, max) depth over all valid pixels."""
        if not self.valid.any():
            raise ValueError("lookup table has no valid pixels")
        return (float(np.nanmin(self.depth_lo[self.valid])),
                float(np.nanmax(self.depth_hi[self.valid])))

    def _slices(self, j, i, c):
        q = (j * self.width + i) * self.n_channels + c
        t = self.knots_flat[self.knot_offsets[q]:self.knot_offsets[q + 1]]
        co = self.coefs_flat[self.coef_offsets[q]:self.coef_offsets[q + 1]]
        return t, co

    def ray(self, i, j):
        """Spline view of pixel (i, j); raises for uncalibrated pixels."""
        if not 0 <= j < self.height or not 0 <= i < self.width:
            raise ValueError(
                f"pixel ({i}, {j}) outside table of size "
                f"{self.width} x {self.height}"
            )
        if not self.valid[j, i]:
            raise ValueError(f"pixel ({i}, {j}) has no calibrated spline")
        splines = []
        for c in range(self.n_channels):
            t, co = self._slices(j, i, c)
            splines.append(BSpline.construct_fast(t, co, _SPLINE_DEGREE))
        return RayView(pixel=(i, j), depth_lo=float(self.depth_lo[j, i]),
                       depth_hi=float(self.depth_hi[j, i]), splines=tuple(splines))

    def equals(self, other):
        """Exact (bitwise) equality of two tables."""
        if not isinstance(other, RayLUT):
            return False
        return (
            self.camera == other.camera
            and self.channel_ids == other.channel_ids
            and np.array_equal(self.valid, other.valid)
            and _nan_equal(self.depth_lo, other.depth_lo)
            and _nan_equal(self.depth_hi, other.depth_hi)
            and np.array_equal(self.knot_offsets, other.knot_offsets)
            and np.array_equal(self.knots_flat, other.knots_flat)
            and np.array_equal(self.coef_offsets, other.coef_offsets)
            and np.array_equal(self.coefs_flat, other.coefs_flat)
        )


def _nan_equal(a, b):
    return np.array_equal(a, b, equal_nan=True)


@dataclass(frozen=True)
class FitReport:
    """Per-pixel diagnostics of the spline fit."""

    sample_count: np.ndarray  # [H, W], int32
    residual_rms: np.ndarray  # [H, W], float64, NaN where not fitted
    valid: np.ndarray  # [H, W], bool

    def write_csv(self, path):
        """One row per pixel: i, j, sample count, residual, fitted flag."""
        h, w = self.sample_count.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "samples", "residual_rms", "fitted"])
            for j in range(h):
                for i in range(w):
                    res = self.residual_rms[j, i]
                    writer.writerow([
                        i, j, int(self.sample_count[j, i]),
                        "" if np.isnan(res) else repr(float(res)),
                        int(self.valid[j, i]),
                    ])


def noise_scaled_smoothing(noise_sigma, n_samples):
    """Spline smoothing budget matched to the sample noise level.

    The smoothing parameter bounds the total squared residual, so the
    natural budget for n samples of noise level sigma is n * sigma^2.
    """
    check_positive(noise_sigma, "noise_sigma", strict=False)
    if not isinstance(n_samples, (int, np.integer)) or n_samples < 1:
        raise ValueError(f"n_samples must be a positive int, got {n_samples}")
    return float(n_samples) * float(noise_sigma) ** 2


def fit_ray_splines(samples, smoothing=0.0, min_samples=4, workers=None):
    """Fit a cubic spline per pixel and channel through the ray samples.

    With ``smoothing=0`` the splines interpolate the samples exactly;
    positive values trade fidelity for smoothness and are useful on noisy
    sweeps (see ``noise_scaled_smoothing``). Pixels with fewer than
    ``min_samples`` usable samples are left invalid rather than poorly
    extrapolated.

    Parameters
    ----------
    samples : RaySamples
    smoothing : float
        Total squared residual budget per channel, >= 0.
    min_samples : int
        At least 4, the cubic minimum.
    workers : int, optional
        Process count for the fit; results are identical for any value.

    Returns
    -------
    (RayLUT, FitReport)

    Raises
    ------
    ValueError
        If any pixel sees two samples at the same depth; duplicate stops
        indicate a broken sweep rather than data to average away.
    """
    check_positive(smoothing, "smoothing", strict=False)
    if not isinstance(min_samples, (int, np.integer)) or min_samples < 4:
        raise ValueError(f"min_samples must be an int >= 4, got {min_samples}")
    n, h, w = samples.depths.shape
    k = len(samples.channel_ids)

    # Row blocks are fixed by the image size alone so that any worker
    # count reproduces the serial result exactly.
    rows = split_blocks(h, resolve_workers(workers))
    blocks = parallel_map(_fit_row_block, rows,
                          shared=(samples, smoothing, min_samples),
                          workers=workers)

    valid = np.zeros((h, w), dtype=bool)
    depth_lo = np.full((h, w), np.nan)
    depth_hi = np.full((h, w), np.nan)
    count = np.zeros((h, w), dtype=np.int32)
    residual = np.full((h, w), np.nan)
    knot_parts = []
    coef_parts = []
    knot_lens = np.zeros(h * w * k, dtype=np.int64)
    coef_lens = np.zeros(h * w * k, dtype=np.int64)

    for block_rows, block in zip(rows, blocks):
        for row_offset, row_result in enumerate(block):
            j = block_rows[row_offset]
            for i, (n_used, lo, hi, res, channel_fits) in enumerate(row_result):
                count[j, i] = n_used
                if channel_fits is None:
                    continue
                valid[j, i] = True
                depth_lo[j, i] = lo
                depth_hi[j, i] = hi
                residual[j, i] = res
                base = (j * w + i) * k
                for c, (t, co) in enumerate(channel_fits):
                    knot_parts.append(t)
                    coef_parts.append(co)
                    knot_lens[base + c] = t.size
                    coef_lens[base + c] = co.size

    knot_offsets = np.zeros(h * w * k + 1, dtype=np.int64)
    np.cumsum(knot_lens, out=knot_offsets[1:])
    coef_offsets = np.zeros(h * w * k + 1, dtype=np.int64)
    np.cumsum(coef_lens, out=coef_offsets[1:])
    lut = RayLUT(
        camera=samples.camera,
        channel_ids=samples.channel_ids,
        valid=valid,
        depth_lo=depth_lo,
        depth_hi=depth_hi,
        knot_offsets=knot_offsets,
        knots_flat=np.concatenate(knot_parts) if knot_parts else np.empty(0),
        coef_offsets=coef_offsets,
        coefs_flat=np.concatenate(coef_parts) if coef_parts else np.empty(0),
    )
    report = FitReport(sample_count=count, residual_rms=residual, valid=valid)
    return lut, report


def _fit_row_block(rows):
    samples, smoothing, min_samples = get_shared()
    out = []
    for j in rows:
        row = []
        for i in range(samples.depths.shape[2]):
            row.append(_fit_pixel(samples, j, i, smoothing, min_samples))
        out.append(row)
    return out


def _fit_pixel(samples, j, i, smoothing, min_samples):
    d, colors = samples.for_pixel(i, j)
    n_used = d.size
    if n_used < min_samples:
        return (n_used, np.nan, np.nan, np.nan, None)
    if np.any(np.diff(d) <= 0.0):
        raise ValueError(
            f"pixel ({i}, {j}) has duplicate sample depths; "
            "each sweep stop must sit at a distinct depth"
        )
    fits = []
    sq_sum = 0.0
    for c in range(colors.shape[1]):
        t, co, _ = splrep(d, colors[:, c], k=_SPLINE_DEGREE, s=smoothing)
        co = co[:t.size - _SPLINE_DEGREE - 1]
        fits.append((t, co))
        predicted = BSpline.construct_fast(t, co, _SPLINE_DEGREE)(d)
        sq_sum += float(((predicted - colors[:, c]) ** 2).sum())
    res = np.sqrt(sq_sum / (n_used * colors.shape[1]))
    return (n_used, float(d[0]), float(d[-1]), res, fits)
