"""Shared fixtures: one small calibrated rig reused across the suite.

The sweep, table, and scan below are deliberately session scoped; they
are pure functions of fixed seeds, so sharing them is safe and keeps the
suite fast. Tests must not mutate them.
"""

import numpy as np
import pytest

import lutscan as ls


SIZE = 16
STAGE = ls.StageRange(0.44, 0.51, 0.001)
PLANE_DEPTH = 0.4755  # between stage stops

CRITERION_LINES = []


def criterion_line(text):
    """Record an acceptance verdict for the end-of-run summary."""
    CRITERION_LINES.append(text)
    print(text)


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rig():
    return ls.demo_rig(SIZE)


@pytest.fixture(scope="session")
def spiral_pattern():
    return ls.gen_pattern(ls.PatternSpec(kind="spiral"))


@pytest.fixture(scope="session")
def sweep(rig, spiral_pattern):
    camera, projector = rig
    return ls.simulate_sweep(camera, projector, [spiral_pattern], STAGE)


@pytest.fixture(scope="session")
def sweep_stacks(sweep):
    return [ls.normalize_stack(f) for f in sweep.frames]


@pytest.fixture(scope="session")
def aligned_poses(sweep):
    trajectory = ls.fit_trajectory(sweep.poses)
    return ls.project_poses(trajectory, sweep.poses)


@pytest.fixture(scope="session")
def lut(rig, sweep_stacks, aligned_poses):
    camera, _ = rig
    samples = ls.collect_ray_samples(sweep_stacks, aligned_poses, camera)
    table, _ = ls.fit_ray_splines(samples)
    return table


@pytest.fixture(scope="session")
def plane_scene():
    return ls.PlaneScene(point=np.array([0.0, 0.0, PLANE_DEPTH]),
                         normal=np.array([0.0, 0.0, -1.0]))


@pytest.fixture(scope="session")
def plane_capture(rig, spiral_pattern, plane_scene):
    camera, projector = rig
    return ls.render_capture(plane_scene, camera, projector, [spiral_pattern])


@pytest.fixture(scope="session")
def plane_stack(plane_capture):
    return ls.normalize_stack(plane_capture)


@pytest.fixture(scope="session")
def plane_depth_map(lut, plane_stack):
    return ls.reconstruct_frame(lut, plane_stack)
