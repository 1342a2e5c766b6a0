"""Shared fixtures and the acceptance-criteria result summary.

Tests marked ``@pytest.mark.criterion("<label>")`` are collected into a
summary block printed at the end of the run, one PASS/FAIL line per
criterion, so the binding checks are visible at a glance.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nbvsim.geometry import build_dome
from nbvsim.occmap import MapParams, OccupancyMap, integrate_depth
from nbvsim.policies import ExplorationContext, utility_intrinsics
from nbvsim.scene import CameraIntrinsics, generate_room, render_depth

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): acceptance criterion verified by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup"
                                 and report.outcome != "passed"):
        _CRITERIA[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(_CRITERIA):
        outcome = _CRITERIA[label]
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome,
                                                        outcome.upper())
        terminalreporter.write_line(f"ACCEPTANCE {label}: {word}")


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="session")
def dome():
    """Full-size viewpoint dome at the default parameters."""
    return build_dome(3)


@pytest.fixture(scope="session")
def small_dome():
    """42-vertex dome; enough structure for graph and policy tests.

    The default neighbor radius matches the full dome's vertex spacing,
    so at one subdivision it is widened to keep the graph connected
    (chord rings at this size: 0.109 and 0.124, next ring 0.195).
    """
    return build_dome(1, neighbor_radius_m=0.13)


@pytest.fixture(scope="session")
def small_intrinsics():
    """Low-resolution camera that keeps render/integrate cheap."""
    return CameraIntrinsics(width=48, height=36)


@pytest.fixture(scope="session")
def coarse_params():
    """Coarse map so fresh grids stay small in unit tests."""
    return MapParams(resolution_m=0.1)


@pytest.fixture(scope="session")
def scene3():
    return generate_room(3)


@pytest.fixture(scope="session")
def make_context(small_intrinsics, coarse_params):
    """Build a live ExplorationContext at a dome vertex.

    Renders the vertex's depth frame, integrates it into a fresh map
    for the scene, and wires up candidates and seeded rng — the same
    shape of context the harness hands to policies.
    """
    def build(scene, dome, vertex, seed=0, scene_attached=True,
              max_range_m=10.0):
        pose = dome.pose(vertex)
        omap = OccupancyMap.for_room(scene.room_min, scene.room_max,
                                     coarse_params)
        depth = render_depth(scene, pose, small_intrinsics, max_range_m)
        integrate_depth(omap, depth, pose, small_intrinsics, max_range_m)
        return ExplorationContext(
            dome=dome, map=omap, current_index=vertex, current_pose=pose,
            current_depth=depth, candidates=dome.adjacency[vertex],
            rng=np.random.default_rng(seed), intrinsics=small_intrinsics,
            utility_intrinsics=utility_intrinsics(dome, small_intrinsics),
            scene=scene if scene_attached else None,
            max_range_m=max_range_m)

    return build
