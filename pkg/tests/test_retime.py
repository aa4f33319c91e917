import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fovplan.planner import PLANAR_DIRS, PlannedPath
from fovplan.retime import (
    MotionModel,
    format_trajectory,
    insert_transition_segments,
    parse_trajectory,
    time_parameterize,
    trapezoid_duration,
)

MODEL = MotionModel(v_max=3.0, a_max=2.0)
VZ = math.tan(math.radians(15.0))


def path_of(points, yaw=0.0):
    wp = np.zeros((len(points), 4))
    wp[:, :3] = points
    wp[:, 3] = yaw
    return PlannedPath(wp)


def lattice_walk(rng, steps):
    """Random heading-constrained lattice walk that respects the climb bound."""
    pts = [np.zeros(3)]
    h = int(rng.integers(8))
    for _ in range(steps):
        h = (h + int(rng.integers(-1, 2))) % 8
        dx, dy = PLANAR_DIRS[h]
        dz = int(rng.integers(-1, 2))
        pts.append(pts[-1] + [dx, dy, dz * VZ])
    return path_of(np.array(pts))


# --- blends -----------------------------------------------------------------


def test_straight_path_is_unchanged():
    p = path_of([(i, 0, 0) for i in range(5)])
    q = insert_transition_segments(p, 0.5)
    assert np.array_equal(q.waypoints, p.waypoints)


def test_right_angle_blend_stays_in_corner_triangle():
    p = path_of([(0, 0, 0), (1, 0, 0), (1, 1, 0)])
    q = insert_transition_segments(p, 0.25)
    corner = np.array([1.0, 0.0, 0.0])
    inner = q.positions[1:-1]
    assert len(inner) > 2
    assert np.all(np.linalg.norm(inner - corner, axis=1) <= 0.25 + 1e-12)
    # triangle (0.75, 0), (1, 0), (1, 0.25): x in [0.75, 1], y in [0, 0.25], x - y >= 0.75
    x, y = inner[:, 0], inner[:, 1]
    assert np.all((x >= 0.75 - 1e-12) & (x <= 1 + 1e-12) & (y >= -1e-12) & (x - y >= 0.75 - 1e-12))


def test_short_path_returned_unchanged():
    p = path_of([(0, 0, 0), (1, 0, 0)])
    assert np.array_equal(insert_transition_segments(p, 0.5).waypoints, p.waypoints)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.5))
@settings(max_examples=40, deadline=None)
def test_blend_preserves_endpoints_and_deviation(seed, dev):
    p = lattice_walk(np.random.default_rng(seed), 12)
    q = insert_transition_segments(p, dev)
    assert np.array_equal(q.waypoints[0], p.waypoints[0])
    assert np.array_equal(q.waypoints[-1], p.waypoints[-1])
    # every blended point is within dev of the original polyline's vertices or on a leg
    d = np.diff(q.positions, axis=0)
    ang = np.abs(np.arctan2(d[:, 2], np.hypot(d[:, 0], d[:, 1])))
    assert np.all(ang <= math.radians(15.0) + 1e-6)


# --- closed-form profiles ---------------------------------------------------


def test_straight_ten_metres_trapezoid():
    assert trapezoid_duration(10.0, 3.0, 2.0) == pytest.approx(1.5 + 10 / 3)
    traj = time_parameterize(path_of([(0, 0, 0), (10, 0, 0)]), MODEL, 0.1)
    assert traj.duration == pytest.approx(math.ceil(4.8333333 / 0.1) * 0.1, abs=1e-9)
    assert traj.speeds().max() == pytest.approx(3.0)
    assert traj.positions[-1, 0] == 10.0


def test_straight_one_metre_triangle():
    assert trapezoid_duration(1.0, 3.0, 2.0) == pytest.approx(math.sqrt(2))
    traj = time_parameterize(path_of([(0, 0, 0), (1, 0, 0)]), MODEL, 0.01)
    assert traj.speeds().max() == pytest.approx(math.sqrt(2), abs=0.02)
    assert traj.duration == pytest.approx(math.sqrt(2), abs=0.01)


def test_zero_length_path():
    traj = time_parameterize(path_of([(1, 2, 3)]), MODEL, 0.1)
    assert len(traj) == 1 and traj.duration == 0.0
    assert np.all(traj.vel == 0)


def test_in_place_rotation_consumes_time_at_yaw_rate():
    wp = np.array([[0, 0, 0, 0.0], [0, 0, 0, math.pi / 2]])
    traj = time_parameterize(wp, MODEL, 0.1)
    assert np.all(traj.positions == 0)
    assert traj.duration == pytest.approx(1.0 + 0.1, abs=1e-9)
    assert np.all(np.abs(np.diff(traj.pose[:, 3])) <= MODEL.yaw_rate_max * 0.1 + 1e-12)


def test_trajectory_text_round_trip():
    traj = time_parameterize(path_of([(0, 0, 0), (3, 1, 0.2), (5, 4, 0.4)]), MODEL, 0.1)
    again = parse_trajectory(format_trajectory(traj))
    assert again.dt == traj.dt
    assert np.allclose(again.pose, traj.pose, rtol=1e-8, atol=1e-8)
    assert np.allclose(again.vel, traj.vel, rtol=1e-8, atol=1e-8)


# --- invariants ------------------------------------------------------------


@given(st.integers(0, 2**31 - 1), st.integers(2, 25))
@settings(max_examples=40, deadline=None)
def test_retimed_trajectory_invariants(seed, steps):
    rng = np.random.default_rng(seed)
    path = insert_transition_segments(lattice_walk(rng, steps), 0.5)
    dt = 0.1
    traj = time_parameterize(path, MODEL, dt)
    assert np.allclose(traj.times, np.arange(len(traj)) * dt)
    speed = traj.speeds()
    acc = np.linalg.norm(traj.acc[:, :3], axis=1)
    assert speed.max() <= MODEL.v_max + 1e-9
    assert acc.max() <= MODEL.a_max + 1e-9
    # rest to rest
    assert np.all(traj.vel[[0, -1], :3] == 0) and np.all(traj.acc[-1] == 0)
    # sampled arc length close to the path's
    assert abs(traj.arc_length() - path.arc_length()) <= 2 * MODEL.v_max * dt
    # visibility preserved
    angles = np.abs(traj.segment_angles())
    assert angles.max(initial=0) <= math.radians(15.0) + 1e-6
    # finite-difference velocity matches stored velocity
    p = traj.positions
    if len(p) > 2:
        fd = (p[2:] - p[:-2]) / (2 * dt)
        assert np.max(np.linalg.norm(fd - traj.vel[1:-1, :3], axis=1)) <= 10 * MODEL.a_max * dt
        fda = (p[2:] - 2 * p[1:-1] + p[:-2]) / dt**2
        assert np.linalg.norm(fda, axis=1).max() <= MODEL.a_max + 1e-6


def test_start_speed_for_suffixes():
    traj = time_parameterize(path_of([(0, 0, 0), (20, 0, 0)]), MODEL, 0.1, v_start=2.0)
    assert traj.vel[0, 0] == pytest.approx(2.0)
    assert traj.positions[1, 0] == pytest.approx(2.0 * 0.1 + 0.5 * 2.0 * 0.01)
