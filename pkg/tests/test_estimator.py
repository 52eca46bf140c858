"""Scikit-learn estimator facade over the calibration pipeline."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import lutscan as ls


@pytest.fixture(scope="module")
def fitted(rig, sweep):
    camera, _ = rig
    return ls.LookupDepthScanner(camera=camera).fit(sweep)


def test_params_round_trip_through_the_sklearn_protocol(rig):
    camera, _ = rig
    scanner = ls.LookupDepthScanner(camera=camera, step=2e-5, refine=True)
    params = scanner.get_params()
    assert params["camera"] is camera
    assert params["step"] == 2e-5
    assert params["refine"] is True
    assert params["smoothing"] == 0.0
    scanner.set_params(step=1e-5)
    assert scanner.step == 1e-5
    copy = clone(scanner)
    assert copy.get_params() == scanner.get_params()
    assert not hasattr(copy, "lut_")


def test_predict_requires_fit_first(rig, plane_capture):
    camera, _ = rig
    scanner = ls.LookupDepthScanner(camera=camera)
    with pytest.raises(NotFittedError):
        scanner.predict(plane_capture)
    with pytest.raises(NotFittedError):
        scanner.to_points(None)


def test_fit_requires_a_camera_and_poses(sweep):
    with pytest.raises(ValueError, match="camera"):
        ls.LookupDepthScanner().fit(sweep)
    camera = ls.demo_rig(16)[0]
    with pytest.raises(ValueError, match="poses are required"):
        ls.LookupDepthScanner(camera=camera).fit(list(sweep.frames))
    with pytest.raises(ValueError, match="3 frames but 2 poses"):
        ls.LookupDepthScanner(camera=camera).fit(list(sweep.frames)[:3],
                                                 y=list(sweep.poses)[:2])


def test_fit_accepts_frames_and_poses_separately(rig, sweep, fitted):
    camera, _ = rig
    split = ls.LookupDepthScanner(camera=camera).fit(list(sweep.frames),
                                                     y=list(sweep.poses))
    assert split.lut_.equals(fitted.lut_)


def test_facade_matches_the_functional_pipeline(rig, sweep, sweep_stacks,
                                                aligned_poses, lut, fitted,
                                                plane_capture,
                                                plane_depth_map):
    camera, _ = rig
    assert fitted.lut_.equals(lut)
    predicted = fitted.predict(plane_capture)
    assert np.array_equal(predicted.depth, plane_depth_map.depth,
                          equal_nan=True)
    assert np.array_equal(predicted.valid, plane_depth_map.valid)
    cloud = fitted.to_points(predicted)
    direct = ls.depth_to_points(plane_depth_map, camera)
    assert np.array_equal(cloud.positions, direct.positions)


def test_predict_handles_stacks_and_sequences(fitted, plane_capture,
                                              plane_stack):
    from_frame = fitted.predict(plane_capture)
    from_stack = fitted.predict(plane_stack)
    assert np.array_equal(from_frame.depth, from_stack.depth, equal_nan=True)
    batch = fitted.predict([plane_capture, plane_stack])
    assert isinstance(batch, list) and len(batch) == 2
    assert np.array_equal(batch[0].depth, batch[1].depth, equal_nan=True)
    with pytest.raises(TypeError, match="CaptureFrame or NormalizedStack"):
        fitted.predict([np.zeros((16, 16, 3))])


def test_hyperparameters_reach_the_pipeline(rig, sweep, plane_capture,
                                            fitted):
    camera, _ = rig
    coarse = ls.LookupDepthScanner(camera=camera, step=1e-3,
                                   residual_reject=None).fit(sweep)
    fine_map = fitted.predict(plane_capture)
    coarse_map = coarse.predict(plane_capture)
    # A 1 mm grid quantizes depths visibly; a 10 um grid does not.
    fine_steps = np.unique(fine_map.depth[fine_map.valid]).size
    coarse_steps = np.unique(coarse_map.depth[coarse_map.valid]).size
    assert coarse_steps < fine_steps
    strict = ls.LookupDepthScanner(camera=camera, min_samples=200).fit(sweep)
    assert not strict.lut_.valid.any()


def test_fit_exposes_trajectory_and_report(fitted):
    assert fitted.trajectory_ is not None
    assert fitted.fit_report_.valid.all()
    assert fitted.lut_.camera == fitted.camera
