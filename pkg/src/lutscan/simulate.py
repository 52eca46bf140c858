"""Synthetic capture rendering for rig design and pipeline testing.

Renders what the camera would see while the projector shows a pattern:
scene intersection along the camera rays, pattern lookup along the
projector's coded axis, Lambertian shading, projector optics (blur,
gamma, vignetting), then additive sensor noise. All randomness is driven
by explicit seeds, so identical calls produce identical frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve, gaussian_filter1d
from scipy.spatial.transform import Rotation

from .geometry import BoardPose, CameraModel, ProjectorModel, camera_rays, toe_in_projector
from .patterns import Pattern, white_pattern
from .validation import (
    check_array,
    check_finite,
    check_in_range,
    check_positive,
    check_unit_vector,
)

__all__ = [
    "NOISE_PROFILES",
    "CaptureFrame",
    "HeightfieldScene",
    "NoiseModel",
    "PlaneScene",
    "PoseNoise",
    "SphereScene",
    "StageRange",
    "SweepBoard",
    "SweepResult",
    "board_scene",
    "demo_rig",
    "demosaic_bilinear",
    "mosaic_bayer",
    "noise_profile",
    "render_capture",
    "render_frame",
    "scene_depth",
    "simulate_sweep",
]


@dataclass(frozen=True)
class NoiseModel:
    """Additive sensor noise: read floor plus signal dependent shot term.

    Per-pixel noise std is ``gain_c * sqrt(shot^2 * I + read^2)`` for
    channel c. Green (index 1) typically gets a gain below 1 because
    sensors resolve it more cleanly.
    """

    read_noise_sigma: float = 0.0
    shot_noise_scale: float = 0.0
    ambient_level: float = 0.0
    channel_gains: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        check_positive(self.read_noise_sigma, "read_noise_sigma", strict=False)
        check_positive(self.shot_noise_scale, "shot_noise_scale", strict=False)
        check_positive(self.ambient_level, "ambient_level", strict=False)
        gains = tuple(float(g) for g in self.channel_gains)
        if len(gains) != 3 or any(g <= 0 for g in gains):
            raise ValueError(f"channel_gains must be 3 positive floats, got {gains}")
        object.__setattr__(self, "channel_gains", gains)

    @property
    def silent(self):
        return self.read_noise_sigma == 0.0 and self.shot_noise_scale == 0.0


NOISE_PROFILES = {
    "none": NoiseModel(),
    "low": NoiseModel(read_noise_sigma=0.002, shot_noise_scale=0.002,
                      channel_gains=(1.0, 0.6, 1.0)),
    "moderate": NoiseModel(read_noise_sigma=0.01, shot_noise_scale=0.01,
                           channel_gains=(1.0, 0.6, 1.0)),
    "high": NoiseModel(read_noise_sigma=0.03, shot_noise_scale=0.03,
                       ambient_level=0.01, channel_gains=(1.0, 0.6, 1.0)),
}


def noise_profile(name):
    """Look up a named noise profile."""
    try:
        return NOISE_PROFILES[name]
    except KeyError:
        raise ValueError(
            f"unknown noise profile {name!r}, expected one of "
            f"{sorted(NOISE_PROFILES)}"
        ) from None


@dataclass(frozen=True)
class PlaneScene:
    """An infinite or bounded plane."""

    point: np.ndarray  # [3]
    normal: np.ndarray  # [3], unit
    albedo: float = 1.0
    half_extent: float = None  # in-plane bound from `point`, None = infinite

    def __post_init__(self):
        point = check_array(self.point, "point", shape=(3,))
        check_finite(point, "point")
        normal = check_unit_vector(self.normal, "normal")
        check_in_range(self.albedo, "albedo", 0.0, 1.0)
        if self.half_extent is not None:
            check_positive(self.half_extent, "half_extent")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class SphereScene:
    """A sphere, shaded on its camera-facing hemisphere."""

    center: np.ndarray  # [3]
    radius: float
    albedo: float = 1.0

    def __post_init__(self):
        center = check_array(self.center, "center", shape=(3,))
        check_finite(center, "center")
        check_positive(self.radius, "radius")
        check_in_range(self.albedo, "albedo", 0.0, 1.0)
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class HeightfieldScene:
    """Arbitrary surface given as per-pixel depth along the camera rays."""

    depth: np.ndarray  # [H, W], NaN = no surface
    albedo: object = 1.0  # scalar or [H, W]

    def __post_init__(self):
        depth = check_array(self.depth, "depth", ndim=2)
        albedo = self.albedo
        if np.ndim(albedo) == 0:
            check_in_range(float(albedo), "albedo", 0.0, 1.0)
            albedo = float(albedo)
        else:
            albedo = check_array(albedo, "albedo", shape=depth.shape)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "albedo", albedo)


def board_scene(pose, half_size=None):
    """Scene for a calibration board at one pose."""
    return PlaneScene(
        point=pose.point, normal=pose.normal, albedo=pose.albedo,
        half_extent=half_size,
    )


@dataclass(frozen=True)
class CaptureFrame:
    """A stack of coregistered images, one per projected pattern."""

    images: np.ndarray  # [P, H, W, C], float64, non-negative
    pattern_ids: tuple
    exposure: float = 1.0

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim != 4:
            raise ValueError(f"images must have 4 dimensions, got {images.ndim}")
        if images.shape[3] not in (1, 3):
            raise ValueError(f"images must have 1 or 3 channels, got {images.shape[3]}")
        check_finite(images, "images")
        if images.min() < 0.0:
            raise ValueError("images must be non-negative")
        ids = tuple(str(p) for p in self.pattern_ids)
        if len(ids) != images.shape[0]:
            raise ValueError(
                f"got {images.shape[0]} images but {len(ids)} pattern_ids"
            )
        if len(set(ids)) != len(ids):
            raise ValueError(f"pattern_ids must be unique, got {ids}")
        check_positive(self.exposure, "exposure")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "pattern_ids", ids)

    @property
    def shape(self):
        return self.images.shape

    def image(self, pattern_id):
        """The image for one pattern id, shape (H, W, C)."""
        try:
            idx = self.pattern_ids.index(pattern_id)
        except ValueError:
            raise KeyError(
                f"no image for pattern id {pattern_id!r}, have {self.pattern_ids}"
            ) from None
        return self.images[idx]


def _intersect(scene, camera, dirs):
    """Intersect camera rays with a scene.

    Returns (depth [H, W], normal [H, W, 3], albedo [H, W], hit [H, W]);
    entries of missed pixels are undefined except hit=False.
    """
    h, w = dirs.shape[:2]
    if isinstance(scene, PlaneScene):
        denom = dirs @ scene.normal  # [H, W]
        num = float(scene.point @ scene.normal)
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = num / denom
            hit = (np.abs(denom) > 1e-12) & (depth > 0.0)
        if scene.half_extent is not None:
            pts = dirs * np.where(hit, depth, 1.0)[..., None]
            offset = pts - scene.point
            u_axis = _plane_basis(scene.normal)
            v_axis = np.cross(scene.normal, u_axis)
            hit &= np.abs(offset @ u_axis) <= scene.half_extent
            hit &= np.abs(offset @ v_axis) <= scene.half_extent
        normal = np.broadcast_to(scene.normal, (h, w, 3))
        # Face the camera so shading is double sided.
        flip = (dirs @ scene.normal) > 0.0
        normal = np.where(flip[..., None], -normal, normal)
        albedo = np.full((h, w), scene.albedo)
        return depth, normal, albedo, hit
    if isinstance(scene, SphereScene):
        proj = dirs @ scene.center  # [H, W]
        disc = proj ** 2 - (scene.center @ scene.center - scene.radius ** 2)
        with np.errstate(invalid="ignore"):
            depth = proj - np.sqrt(disc)
            hit = (disc > 0.0) & (depth > 0.0)
        pts = dirs * np.where(hit, depth, 1.0)[..., None]
        normal = (pts - scene.center) / scene.radius
        albedo = np.full((h, w), scene.albedo)
        return depth, normal, albedo, hit
    if isinstance(scene, HeightfieldScene):
        depth = scene.depth
        if depth.shape != (h, w):
            raise ValueError(
                f"heightfield depth shape {depth.shape} does not match "
                f"image size {h} x {w}"
            )
        with np.errstate(invalid="ignore"):
            hit = np.isfinite(depth) & (depth > 0.0)
        pts = dirs * np.where(hit, depth, np.nan)[..., None]
        normal = _grid_normals(pts, dirs, hit)
        if np.ndim(scene.albedo) == 0:
            albedo = np.full((h, w), scene.albedo)
        else:
            albedo = scene.albedo
        return depth, normal, albedo, hit
    raise TypeError(f"unsupported scene type {type(scene).__name__}")


def _plane_basis(normal):
    """Any unit vector orthogonal to `normal`."""
    seed = np.array([1.0, 0.0, 0.0])
    if abs(normal[0]) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, seed)
    return u / np.linalg.norm(u)


def _grid_normals(pts, dirs, hit):
    """Per-pixel normals of a point grid, oriented toward the camera."""
    with np.errstate(invalid="ignore"):
        d_row = np.gradient(pts, axis=0)  # [H, W, 3]
        d_col = np.gradient(pts, axis=1)
        normal = np.cross(d_col, d_row)
        norm = np.linalg.norm(normal, axis=-1, keepdims=True)
        normal = np.where(norm > 0, normal / np.where(norm > 0, norm, 1.0), 0.0)
        flip = np.sum(normal * dirs, axis=-1) > 0.0
        normal = np.where(flip[..., None], -normal, normal)
        normal = np.where(np.isfinite(normal), normal, 0.0)
    fallback = ~np.isfinite(normal).all(axis=-1) | (np.linalg.norm(normal, axis=-1) == 0)
    normal[fallback & hit] = -dirs[fallback & hit]
    return normal


def _sample_pattern(pattern, blur_sigma, coords):
    """Sample a pattern at normalized coordinates, zero outside [0, 1]."""
    values = pattern.values  # [res, C]
    if blur_sigma > 0.0:
        values = gaussian_filter1d(values, blur_sigma, axis=0, mode="nearest")
    res = values.shape[0]
    u = coords * (res - 1)
    grid = np.arange(res, dtype=np.float64)
    flat_u = u.reshape(-1)
    out = np.empty((flat_u.size, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.interp(flat_u, grid, values[:, c])
    out[(flat_u < 0.0) | (flat_u > res - 1)] = 0.0
    return out.reshape(coords.shape + (values.shape[1],))


def render_frame(scene, camera, projector, pattern, noise=None, seed=0, exposure=1.0):
    """Render one camera image of the scene under one pattern.

    Parameters
    ----------
    scene : PlaneScene or SphereScene or HeightfieldScene
    camera : CameraModel
    projector : ProjectorModel
    pattern : Pattern
    noise : NoiseModel, optional
        Defaults to a silent sensor.
    seed : int or sequence of int
        Noise seed; the same seed reproduces the frame exactly.
    exposure : float
        Scales the projected signal and is recorded on the frame.

    Returns
    -------
    CaptureFrame
        With a single image (P = 1).
    """
    image, pattern_id = _render_image(scene, camera, projector, pattern,
                                      noise or NoiseModel(), seed, exposure)
    return CaptureFrame(images=image[None], pattern_ids=(pattern_id,),
                        exposure=exposure)


def _render_image(scene, camera, projector, pattern, noise, seed, exposure,
                  channels=None):
    dirs = camera_rays(camera)  # [H, W, 3]
    depth, normal, albedo, hit = _intersect(scene, camera, dirs)
    h, w = dirs.shape[:2]
    if channels is None:
        channels = 1 if pattern is None else pattern.channels

    if pattern is None:
        # Projector off: ambient light only.
        image = np.zeros((h, w, channels))
        pattern_id = "ambient"
    else:
        with np.errstate(invalid="ignore"):
            safe_depth = np.where(hit, depth, 1.0)
        pts = dirs * safe_depth[..., None]  # [H, W, 3]
        coord = projector.pattern_coordinate(pts)  # [H, W]
        sample = _sample_pattern(pattern, projector.blur_sigma, coord)  # [H, W, C]
        if projector.response_gamma != 1.0:
            sample = sample ** projector.response_gamma
        falloff = 1.0 - projector.vignetting_strength * (2.0 * (coord - 0.5)) ** 2
        falloff = np.clip(falloff, 0.0, None)
        to_proj = projector.translation - pts
        to_proj /= np.linalg.norm(to_proj, axis=-1, keepdims=True)
        cosine = np.clip(np.sum(normal * to_proj, axis=-1), 0.0, None)
        signal = albedo * cosine * falloff  # [H, W]
        image = signal[..., None] * sample
        image[~hit] = 0.0
        pattern_id = pattern.spec.kind
        if pattern_id == "graycode":
            pattern_id = f"graycode-{pattern.spec.resolved_params()['stripe_width']}"

    image = image * exposure + noise.ambient_level
    if not noise.silent:
        rng = np.random.default_rng(seed)
        std = np.sqrt(noise.shot_noise_scale ** 2 * image
                      + noise.read_noise_sigma ** 2)
        gains = noise.channel_gains
        if channels == 3:
            std = std * np.asarray(gains)
        else:
            std = std * gains[0]
        image = image + rng.standard_normal(image.shape) * std
        image = np.clip(image, 0.0, None)
    return image, pattern_id


def render_capture(scene, camera, projector, patterns, noise=None, seed=0,
                   exposure=1.0, include_white=True):
    """Render a full capture: the given patterns plus reference frames.

    A white frame is appended for normalization unless already present or
    disabled, and an ambient frame (projector off) is appended when the
    noise model has ambient light.

    Returns
    -------
    CaptureFrame
    """
    noise = noise or NoiseModel()
    patterns = list(patterns)
    if not patterns:
        raise ValueError("need at least one pattern")
    channels = patterns[0].channels
    for p in patterns:
        if p.channels != channels:
            raise ValueError(
                f"patterns disagree in channel count: {channels} vs {p.channels}"
            )
    if include_white and not any(p.spec.kind == "white" for p in patterns):
        patterns.append(white_pattern(patterns[0].resolution, channels))

    images = []
    ids = []
    for idx, pattern in enumerate(patterns):
        image, pattern_id = _render_image(
            scene, camera, projector, pattern, noise, _child_seed(seed, idx), exposure
        )
        images.append(image)
        ids.append(_unique_id(pattern_id, ids))
    if noise.ambient_level > 0.0:
        image, pattern_id = _render_image(
            scene, camera, projector, None, noise, _child_seed(seed, len(patterns)),
            exposure, channels=channels,
        )
        images.append(image)
        ids.append(pattern_id)
    return CaptureFrame(images=np.stack(images), pattern_ids=tuple(ids),
                        exposure=exposure)


def _child_seed(seed, index):
    if isinstance(seed, (int, np.integer)):
        return [int(seed), index]
    return list(seed) + [index]


def _unique_id(pattern_id, existing):
    if pattern_id not in existing:
        return pattern_id
    k = 2
    while f"{pattern_id}-{k}" in existing:
        k += 1
    return f"{pattern_id}-{k}"


def scene_depth(scene, camera):
    """Ground truth depth of a scene along the camera rays.

    Returns
    -------
    numpy.ndarray
        Shape (height, width) float64, NaN where rays miss the scene.
    """
    dirs = camera_rays(camera)
    depth, _, _, hit = _intersect(scene, camera, dirs)
    depth = np.array(depth, dtype=np.float64, copy=True)
    depth[~hit] = np.nan
    return depth


@dataclass(frozen=True)
class StageRange:
    """Inclusive sweep range along the stage axis, in meters."""

    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not math.isfinite(self.start) or not math.isfinite(self.stop):
            raise ValueError("start and stop must be finite")
        check_positive(self.step, "step")
        if self.stop < self.start:
            raise ValueError(f"stop must be >= start, got [{self.start}, {self.stop}]")

    def positions(self):
        """Stop positions start, start + step, ... up to stop inclusive.

        The count is robust to floating point rounding of the range
        width, so a range that is an exact multiple of the step includes
        both endpoints.
        """
        span = (self.stop - self.start) / self.step
        count = int(math.floor(span + 1e-9)) + 1
        return self.start + self.step * np.arange(count)


@dataclass(frozen=True)
class SweepBoard:
    """Geometry of the calibration board on its linear stage."""

    anchor: np.ndarray = (0.0, 0.0, 0.0)
    axis: np.ndarray = (0.0, 0.0, 1.0)
    normal: np.ndarray = None  # default: facing back along the axis
    albedo: float = 1.0
    half_size: float = None  # None = unbounded board

    def __post_init__(self):
        anchor = check_array(self.anchor, "anchor", shape=(3,))
        check_finite(anchor, "anchor")
        axis = check_unit_vector(self.axis, "axis")
        normal = -axis if self.normal is None else check_unit_vector(self.normal, "normal")
        check_in_range(self.albedo, "albedo", 0.0, 1.0)
        if self.half_size is not None:
            check_positive(self.half_size, "half_size")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "normal", normal)

    def pose_at(self, stage_position):
        return BoardPose(
            stage_position=float(stage_position),
            point=self.anchor + stage_position * self.axis,
            normal=self.normal,
            albedo=self.albedo,
        )


@dataclass(frozen=True)
class PoseNoise:
    """Gaussian error on the reported (not actual) board poses."""

    point_sigma: float = 0.0  # meters
    normal_sigma_deg: float = 0.0

    def __post_init__(self):
        check_positive(self.point_sigma, "point_sigma", strict=False)
        check_positive(self.normal_sigma_deg, "normal_sigma_deg", strict=False)


@dataclass(frozen=True)
class SweepResult:
    """Everything captured during a calibration sweep."""

    frames: tuple  # one CaptureFrame per stop
    poses: tuple  # reported BoardPose per stop (what calibration sees)
    true_poses: tuple  # actual BoardPose per stop
    flagged: tuple  # indices of stops where the board missed pixels


def simulate_sweep(camera, projector, patterns, stage, noise=None, *,
                   board=None, pose_noise=None, seed=0):
    """Capture the calibration sweep: the board at every stage stop.

    At each stop the board is rendered under every pattern (plus white,
    plus ambient when modeled). Frames are rendered at the board's true
    pose; the returned ``poses`` carry the reported positions, optionally
    corrupted by ``pose_noise``, which is what a real encoder would hand
    to calibration.

    Parameters
    ----------
    camera : CameraModel
    projector : ProjectorModel
    patterns : sequence of Pattern
    stage : StageRange
    noise : NoiseModel, optional
    board : SweepBoard, optional
        Defaults to an unbounded board swept along +z, facing the camera.
    pose_noise : PoseNoise, optional
    seed : int

    Returns
    -------
    SweepResult
    """
    if not isinstance(stage, StageRange):
        raise TypeError(f"stage must be a StageRange, got {type(stage).__name__}")
    noise = noise or NoiseModel()
    board = board or SweepBoard()
    positions = stage.positions()
    frames = []
    true_poses = []
    reported = []
    flagged = []
    pose_rng = np.random.default_rng(_child_seed(seed, 999983))
    for k, s in enumerate(positions):
        pose = board.pose_at(s)
        true_poses.append(pose)
        scene = board_scene(pose, board.half_size)
        frame = render_capture(scene, camera, projector, patterns, noise,
                               seed=_child_seed(seed, k))
        frames.append(frame)
        if not np.isfinite(scene_depth(scene, camera)).all():
            flagged.append(k)
        reported.append(_perturb_pose(pose, pose_noise, pose_rng))
    return SweepResult(frames=tuple(frames), poses=tuple(reported),
                       true_poses=tuple(true_poses), flagged=tuple(flagged))


def _perturb_pose(pose, pose_noise, rng):
    if pose_noise is None or (
        pose_noise.point_sigma == 0.0 and pose_noise.normal_sigma_deg == 0.0
    ):
        return pose
    point = pose.point
    if pose_noise.point_sigma > 0:
        point = point + rng.normal(0.0, pose_noise.point_sigma, 3)
    normal = pose.normal
    if pose_noise.normal_sigma_deg > 0:
        rotvec = rng.normal(0.0, math.radians(pose_noise.normal_sigma_deg), 3)
        normal = Rotation.from_rotvec(rotvec).as_matrix() @ normal
        normal = normal / np.linalg.norm(normal)
    return BoardPose(stage_position=pose.stage_position, point=point,
                     normal=normal, albedo=pose.albedo)


def mosaic_bayer(frame):
    """Resample a color capture through an RGGB mosaic.

    Each pixel keeps only the channel its Bayer site sees: R at even row
    and column, G at the two mixed sites, B at odd row and column.

    Returns
    -------
    CaptureFrame
        Single channel, same size.
    """
    if frame.images.shape[3] != 3:
        raise ValueError("mosaic_bayer needs a 3 channel capture")
    p, h, w, _ = frame.images.shape
    if h % 2 or w % 2:
        raise ValueError(f"image size must be even for an RGGB mosaic, got {h} x {w}")
    channel = _bayer_channel_grid(h, w)  # [H, W]
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    mosaic = frame.images[:, rows, cols, channel]  # [P, H, W]
    return CaptureFrame(images=mosaic[..., None], pattern_ids=frame.pattern_ids,
                        exposure=frame.exposure)


def demosaic_bilinear(frame):
    """Reconstruct color from an RGGB mosaic by local averaging.

    Each output channel is the normalized 3x3 tent average of the sites
    that sampled it, which is exact on constant colors including at the
    image border.

    Returns
    -------
    CaptureFrame
        Three channels, same size.
    """
    if frame.images.shape[3] != 1:
        raise ValueError("demosaic_bilinear needs a single channel capture")
    p, h, w, _ = frame.images.shape
    if h % 2 or w % 2:
        raise ValueError(f"image size must be even for an RGGB mosaic, got {h} x {w}")
    channel = _bayer_channel_grid(h, w)
    kernel = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]])
    out = np.empty((p, h, w, 3))
    for c in range(3):
        mask = (channel == c).astype(np.float64)
        weight = convolve(mask, kernel, mode="constant")
        for k in range(p):
            masked = frame.images[k, :, :, 0] * mask
            out[k, :, :, c] = convolve(masked, kernel, mode="constant") / weight
    return CaptureFrame(images=out, pattern_ids=frame.pattern_ids,
                        exposure=frame.exposure)


def _bayer_channel_grid(h, w):
    """Channel index sampled at each RGGB site: R=0, G=1, B=2."""
    rows = np.arange(h)[:, None] % 2
    cols = np.arange(w)[None, :] % 2
    return rows + cols  # even,even -> 0 (R); mixed -> 1 (G); odd,odd -> 2 (B)


def demo_rig(size=64, blur_sigma=1.5):
    """A small self-consistent rig for demos and tests.

    Camera with a 28 degree field of view and a projector 0.2 m to the
    side, toed in 15 degrees, covering a working range of roughly 0.4 to
    0.7 m.

    Returns
    -------
    (CameraModel, ProjectorModel)
    """
    camera = CameraModel(width=size, height=size, fx=2.0 * size, fy=2.0 * size,
                         cx=size / 2.0, cy=size / 2.0)
    projector = toe_in_projector(baseline=0.2, toe_in_deg=15.0,
                                 coded_axis_fov=math.radians(40.0),
                                 blur_sigma=blur_sigma)
    return camera, projector
