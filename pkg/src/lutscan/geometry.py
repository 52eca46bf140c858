"""Camera, projector, and calibration stage geometry.

Conventions: the camera sits at the origin looking along +z. Pixel (i, j)
is column i, row j, with integer coordinates at pixel centers. Depth
always means distance along a pixel's unit ray, so a point at depth d on
ray r is ``d * r.direction``. The projector pose maps projector frame to
camera frame via ``X_cam = R @ X_proj + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .validation import (
    check_array,
    check_finite,
    check_in_range,
    check_positive,
    check_unit_vector,
)

__all__ = [
    "BoardPose",
    "CameraModel",
    "LinearTrajectory",
    "ProjectorModel",
    "Ray",
    "camera_rays",
    "fit_trajectory",
    "matrix_to_axis_angle",
    "axis_angle_to_matrix",
    "pixel_ray",
    "plane_depth_grid",
    "project_poses",
    "ray_plane_depth",
    "toe_in_projector",
]

_PARALLEL_EPS = 1e-12


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with an optional radial term.

    ``k1`` acts on normalized pixel coordinates when lifting pixels to
    rays: x' = x * (1 + k1 * r^2). The principal point ray is unaffected.
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0

    def __post_init__(self):
        if not isinstance(self.width, int) or self.width < 1:
            raise ValueError(f"width must be an int >= 1, got {self.width}")
        if not isinstance(self.height, int) or self.height < 1:
            raise ValueError(f"height must be an int >= 1, got {self.height}")
        check_positive(self.fx, "fx")
        check_positive(self.fy, "fy")
        if not 0 <= self.cx < self.width:
            raise ValueError(f"cx must be in [0, {self.width}), got {self.cx}")
        if not 0 <= self.cy < self.height:
            raise ValueError(f"cy must be in [0, {self.height}), got {self.cy}")
        if not math.isfinite(self.k1):
            raise ValueError(f"k1 must be finite, got {self.k1}")


@dataclass(frozen=True)
class Ray:
    """A camera ray through one pixel."""

    pixel: tuple  # (i, j)
    origin: np.ndarray  # [3]
    direction: np.ndarray  # [3], unit length


@dataclass(frozen=True)
class ProjectorModel:
    """Pose and optics of the 1D coded projector.

    The pattern varies along the projector's x axis: a world point with
    projector-frame coordinates (x, y, z) receives the pattern value at
    normalized coordinate ``0.5 + atan2(x, z) / coded_axis_fov``.
    """

    rotation: np.ndarray  # [3, 3], projector to camera
    translation: np.ndarray  # [3], projector origin in camera frame
    coded_axis_fov: float  # radians across the coded axis
    blur_sigma: float = 0.0  # gaussian blur, in pattern samples
    response_gamma: float = 1.0
    vignetting_strength: float = 0.0

    def __post_init__(self):
        rot = check_array(self.rotation, "rotation", shape=(3, 3))
        check_finite(rot, "rotation")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9) or np.linalg.det(rot) < 0:
            raise ValueError("rotation must be a proper rotation matrix")
        trans = check_array(self.translation, "translation", shape=(3,))
        check_finite(trans, "translation")
        check_in_range(self.coded_axis_fov, "coded_axis_fov", 1e-6, 2.0 * math.pi)
        check_positive(self.blur_sigma, "blur_sigma", strict=False)
        check_positive(self.response_gamma, "response_gamma")
        check_in_range(self.vignetting_strength, "vignetting_strength", 0.0, 1.0)
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def pattern_coordinate(self, points):
        """Normalized coded-axis coordinate of world points.

        Parameters
        ----------
        points : array_like
            Shape (..., 3) in camera frame.

        Returns
        -------
        numpy.ndarray
            Shape (...), 0 and 1 at the fov edges; values outside [0, 1]
            fall outside the projector's throw.
        """
        pts = np.asarray(points, dtype=np.float64)
        local = (pts - self.translation) @ self.rotation  # R^T (X - t)
        return 0.5 + np.arctan2(local[..., 0], local[..., 2]) / self.coded_axis_fov


@dataclass(frozen=True)
class BoardPose:
    """Calibration board plane at one stage stop."""

    stage_position: float
    point: np.ndarray  # [3], a point on the plane
    normal: np.ndarray  # [3], unit, facing the camera
    albedo: float = 1.0

    def __post_init__(self):
        point = check_array(self.point, "point", shape=(3,))
        check_finite(point, "point")
        normal = check_unit_vector(self.normal, "normal")
        check_in_range(self.albedo, "albedo", 0.0, 1.0)
        point.setflags(write=False)
        normal.setflags(write=False)
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class LinearTrajectory:
    """Least squares line through the board positions of a sweep."""

    anchor: np.ndarray  # [3]
    axis: np.ndarray  # [3], unit
    residual_rms: float


def pixel_ray(camera, i, j):
    """Unit ray through pixel (i, j).

    Parameters
    ----------
    camera : CameraModel
    i, j : float
        Column and row; may be fractional, must lie inside the image.

    Returns
    -------
    Ray
    """
    if not 0 <= i < camera.width or not 0 <= j < camera.height:
        raise ValueError(
            f"pixel ({i}, {j}) outside image of size "
            f"{camera.width} x {camera.height}"
        )
    x = (i - camera.cx) / camera.fx
    y = (j - camera.cy) / camera.fy
    if camera.k1 != 0.0:
        r2 = x * x + y * y
        x *= 1.0 + camera.k1 * r2
        y *= 1.0 + camera.k1 * r2
    direction = np.array([x, y, 1.0])
    direction /= np.linalg.norm(direction)
    return Ray(pixel=(i, j), origin=np.zeros(3), direction=direction)


def camera_rays(camera):
    """Unit ray directions for every pixel.

    Returns
    -------
    numpy.ndarray
        Shape (height, width, 3), row j column i matching pixel (i, j).
    """
    i = np.arange(camera.width, dtype=np.float64)
    j = np.arange(camera.height, dtype=np.float64)
    x = (i[None, :] - camera.cx) / camera.fx  # [H, W]
    y = (j[:, None] - camera.cy) / camera.fy  # [H, W]
    x, y = np.broadcast_arrays(x, y)
    if camera.k1 != 0.0:
        r2 = x * x + y * y
        x = x * (1.0 + camera.k1 * r2)
        y = y * (1.0 + camera.k1 * r2)
    dirs = np.stack([x, y, np.ones_like(x)], axis=-1)  # [H, W, 3]
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def ray_plane_depth(ray, plane_point, plane_normal):
    """Depth along a ray to its intersection with a plane.

    Raises
    ------
    ValueError
        If the ray is parallel to the plane or hits it behind the origin.
    """
    plane_point = check_array(plane_point, "plane_point", shape=(3,))
    plane_normal = check_unit_vector(plane_normal, "plane_normal")
    denom = float(ray.direction @ plane_normal)
    if abs(denom) < _PARALLEL_EPS:
        raise ValueError("ray is parallel to the plane")
    depth = float((plane_point - ray.origin) @ plane_normal) / denom
    if depth <= 0.0:
        raise ValueError(f"plane lies behind the ray origin (depth {depth:.6g})")
    return depth


def plane_depth_grid(camera, plane_point, plane_normal):
    """Per-pixel depth of a plane, NaN where a ray misses it.

    Returns
    -------
    numpy.ndarray
        Shape (height, width) float64; NaN marks rays parallel to the
        plane or intersecting behind the camera.
    """
    plane_point = check_array(plane_point, "plane_point", shape=(3,))
    plane_normal = check_unit_vector(plane_normal, "plane_normal")
    dirs = camera_rays(camera)  # [H, W, 3]
    denom = dirs @ plane_normal  # [H, W]
    num = float(plane_point @ plane_normal)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = num / denom
        depth[np.abs(denom) < _PARALLEL_EPS] = np.nan
        depth[~(depth > 0.0)] = np.nan
    return depth


def fit_trajectory(poses):
    """Fit a straight line to the board points of a sweep.

    The stage is assumed to move along a line; individual reported poses
    may be noisy. The fit is total least squares: the line through the
    centroid along the direction of largest spread.

    Parameters
    ----------
    poses : sequence of BoardPose
        At least two poses with distinct points.

    Returns
    -------
    LinearTrajectory
    """
    if len(poses) < 2:
        raise ValueError(f"need at least 2 poses to fit a line, got {len(poses)}")
    pts = np.stack([p.point for p in poses])  # [N, 3]
    anchor = pts.mean(axis=0)
    centered = pts - anchor
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    if sing[0] < 1e-12:
        raise ValueError("board points are coincident, cannot fit a line")
    axis = vt[0]
    # Orient along the sweep so repeated fits agree.
    if axis @ (pts[-1] - pts[0]) < 0:
        axis = -axis
    resid = centered - np.outer(centered @ axis, axis)
    residual_rms = float(np.sqrt((resid ** 2).sum(axis=1).mean()))
    return LinearTrajectory(anchor=anchor, axis=axis, residual_rms=residual_rms)


def project_poses(trajectory, poses):
    """Snap board points onto the fitted stage line.

    Each pose's point is replaced by its orthogonal projection onto the
    trajectory; stage positions, normals, and albedo are kept.
    """
    out = []
    for pose in poses:
        along = (pose.point - trajectory.anchor) @ trajectory.axis
        point = trajectory.anchor + along * trajectory.axis
        out.append(
            BoardPose(
                stage_position=pose.stage_position,
                point=point,
                normal=pose.normal,
                albedo=pose.albedo,
            )
        )
    return out


def axis_angle_to_matrix(rotvec):
    """Rotation matrix from an axis-angle vector (radians)."""
    rotvec = check_array(rotvec, "rotvec", shape=(3,))
    check_finite(rotvec, "rotvec")
    return Rotation.from_rotvec(rotvec).as_matrix()


def matrix_to_axis_angle(matrix):
    """Axis-angle vector (radians) from a rotation matrix."""
    matrix = check_array(matrix, "matrix", shape=(3, 3))
    return Rotation.from_matrix(matrix).as_rotvec()


def toe_in_projector(
    baseline=0.2,
    toe_in_deg=15.0,
    coded_axis_fov=math.radians(40.0),
    blur_sigma=0.0,
    response_gamma=1.0,
    vignetting_strength=0.0,
):
    """Projector displaced along +x and yawed back toward the camera axis.

    A positive ``toe_in_deg`` turns the projector so its axis crosses the
    camera axis in front of the rig, the usual scanning arrangement.
    """
    check_positive(baseline, "baseline")
    angle = math.radians(check_in_range(toe_in_deg, "toe_in_deg", 0.0, 90.0))
    rotation = Rotation.from_euler("y", -angle).as_matrix()
    return ProjectorModel(
        rotation=rotation,
        translation=np.array([baseline, 0.0, 0.0]),
        coded_axis_fov=coded_axis_fov,
        blur_sigma=blur_sigma,
        response_gamma=response_gamma,
        vignetting_strength=vignetting_strength,
    )
