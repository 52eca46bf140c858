"""Estimator facade: calibrate with ``fit``, reconstruct with ``predict``.

Wraps the functional pipeline in the scikit-learn estimator protocol so
the scanner composes with that ecosystem's tooling (``get_params``,
``set_params``, ``clone``). Fitted state lives in trailing-underscore
attributes, hyperparameters in the constructor.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .calibrate import (
    NormalizedStack,
    collect_ray_samples,
    fit_ray_splines,
    normalize_stack,
)
from .geometry import fit_trajectory, project_poses
from .reconstruct import depth_to_points, reconstruct_frame
from .simulate import CaptureFrame, SweepResult

__all__ = ["LookupDepthScanner"]


class LookupDepthScanner(BaseEstimator):
    """Depth scanner calibrated from a board sweep.

    ``fit`` consumes a calibration sweep (captures plus reported board
    poses), straightens the reported poses along the fitted stage line,
    and builds the per-pixel color-to-depth table. ``predict`` inverts
    the table for new captures by brute-force color matching.

    Parameters
    ----------
    camera : CameraModel
        Camera the sweep and the scans were taken with.
    smoothing : float
        Spline smoothing budget per pixel and channel; 0 interpolates.
    min_samples : int
        Minimum sweep samples for a pixel to be calibrated.
    white_floor : float
        Minimum white signal for a pixel to count as illuminated.
    step : float
        Reconstruction depth grid spacing in meters.
    residual_reject : float or None
        Color distance above which a match is discarded.
    refine : bool
        Parabolic sub-step refinement of each match.
    workers : int, optional
        Process count for fitting and matching; results do not depend
        on it.

    Attributes
    ----------
    trajectory_ : LinearTrajectory
        Stage line fitted to the reported poses.
    lut_ : RayLUT
        The calibrated lookup table.
    fit_report_ : FitReport
        Per-pixel sample counts and fit residuals.

    Examples
    --------
    >>> scanner = LookupDepthScanner(camera=camera).fit(sweep)
    >>> depth_map = scanner.predict(capture)
    """

    def __init__(self, camera=None, smoothing=0.0, min_samples=4,
                 white_floor=0.02, step=1e-5, residual_reject=0.05,
                 refine=False, workers=None):
        self.camera = camera
        self.smoothing = smoothing
        self.min_samples = min_samples
        self.white_floor = white_floor
        self.step = step
        self.residual_reject = residual_reject
        self.refine = refine
        self.workers = workers

    def fit(self, X, y=None):
        """Calibrate from a sweep.

        Parameters
        ----------
        X : SweepResult, or sequence of CaptureFrame
            The calibration captures. A SweepResult brings its own poses.
        y : sequence of BoardPose, optional
            Reported board poses, required when X is a plain sequence.

        Returns
        -------
        self
        """
        if self.camera is None:
            raise ValueError("set the camera before fitting")
        if isinstance(X, SweepResult):
            frames = X.frames
            poses = X.poses if y is None else y
        else:
            frames = list(X)
            poses = y
        if poses is None:
            raise ValueError("poses are required: pass a SweepResult or y")
        if len(frames) != len(poses):
            raise ValueError(
                f"got {len(frames)} frames but {len(poses)} poses"
            )
        stacks = [normalize_stack(f, white_floor=self.white_floor)
                  for f in frames]
        self.trajectory_ = fit_trajectory(poses)
        corrected = project_poses(self.trajectory_, poses)
        samples = collect_ray_samples(stacks, corrected, self.camera)
        self.lut_, self.fit_report_ = fit_ray_splines(
            samples, smoothing=self.smoothing, min_samples=self.min_samples,
            workers=self.workers,
        )
        return self

    def predict(self, X):
        """Reconstruct depth for one capture or a sequence of captures.

        Parameters
        ----------
        X : CaptureFrame, NormalizedStack, or a sequence of either

        Returns
        -------
        DepthMap or list of DepthMap
        """
        check_is_fitted(self, "lut_")
        if isinstance(X, (CaptureFrame, NormalizedStack)):
            return self._predict_one(X)
        return [self._predict_one(x) for x in X]

    def _predict_one(self, x):
        if isinstance(x, CaptureFrame):
            x = normalize_stack(x, white_floor=self.white_floor)
        elif not isinstance(x, NormalizedStack):
            raise TypeError(
                "predict expects CaptureFrame or NormalizedStack, got "
                f"{type(x).__name__}"
            )
        return reconstruct_frame(
            self.lut_, x, step=self.step,
            residual_reject=self.residual_reject,
            workers=self.workers, refine=self.refine,
        )

    def to_points(self, depth_map):
        """Lift a predicted depth map to a point cloud."""
        check_is_fitted(self, "lut_")
        return depth_to_points(depth_map, self.camera)
