import math

import numpy as np
import pytest

from fovplan.map import compute_distance_field, query_distances
from fovplan.optimizer import OptimizerConfig
from fovplan.pipeline import PipelineConfig, run_pipeline
from fovplan.replan import (
    CycleRecord,
    ExecutionState,
    GoalInfeasible,
    ReplanConfig,
    replan_cycle,
    splice_time,
)
from fovplan.retime import Trajectory
from fovplan.scenes import make_scene


@pytest.fixture(scope="module")
def corridor():
    scene = make_scene("corridor")
    field = compute_distance_field(scene.grid)
    res = run_pipeline(scene.grid, scene.start, scene.goal, PipelineConfig(), field)
    return scene, field, res.trajectory


def test_splice_time_rounds_up_to_grid():
    assert splice_time(1.0, 0.2, 0.1) == pytest.approx(1.3)
    assert splice_time(0.0, 0.0, 0.1) == 0.0
    assert splice_time(2.0, 0.5, 0.1, overhead=0.0) == pytest.approx(2.5)


def test_execution_state_validation():
    with pytest.raises(ValueError):
        ExecutionState(last_cycle_duration=-1.0)
    with pytest.raises(ValueError):
        ReplanConfig(overhead=-0.1)


def test_unchanged_map_is_a_no_op(corridor):
    scene, field, traj = corridor
    state = ExecutionState(1.0, 0.2, field_revision=field.source_revision)
    merged, rec = replan_cycle(state, traj, field, ReplanConfig())
    assert np.array_equal(merged.pose, traj.pose)
    assert not rec.changed


def test_fixed_point_trajectory_is_returned_unchanged():
    scene = make_scene("corridor")
    field = compute_distance_field(scene.grid)
    n = 60
    pose = np.zeros((n, 4))
    pose[:, 0] = 5.5 + 0.25 * np.arange(n)
    pose[:, 1] = 10.5
    pose[:, 2] = scene.start[2]
    vel = np.zeros_like(pose)
    vel[:, 0] = 2.5
    traj = Trajectory(0.1, pose, vel, np.zeros_like(pose))
    merged, _ = replan_cycle(ExecutionState(1.0, 0.2), traj, field, ReplanConfig())
    assert np.max(np.abs(merged.pose - traj.pose)) <= 1e-9


def test_splice_beyond_end_returns_input(corridor):
    _, field, traj = corridor
    merged, rec = replan_cycle(ExecutionState(traj.duration, 0.2), traj, field)
    assert merged is traj
    assert math.isnan(rec.objective_before)


def test_goal_newly_infeasible(corridor):
    scene, _, traj = corridor
    gx, gy, gz = scene.goal[:3]
    # occupy the cell right above the goal
    blocked = scene.grid.with_boxes([((gx - 0.4, gy - 0.4, gz + 0.1), (gx + 0.4, gy + 0.4, gz + 0.4))])
    assert blocked.occupied.sum() == 1
    with pytest.raises(GoalInfeasible):
        replan_cycle(ExecutionState(1.0, 0.2), traj, compute_distance_field(blocked))


def test_obstacle_ahead_is_cleared_and_prefix_untouched(corridor):
    scene, _, traj = corridor
    z = scene.start[2]
    truth = scene.grid.with_boxes([((23.0, 9.0, z - 2.0), (27.0, 13.0, z + 2.0))])
    field = compute_distance_field(truth)
    state = ExecutionState(1.0, 0.2, field_revision=0)
    cfg = ReplanConfig(optimizer=OptimizerConfig(max_iterations=10))
    merged, rec = replan_cycle(state, traj, field, cfg, grid=truth)
    k_s = int(round(rec.splice_time / traj.dt))
    assert rec.splice_time == pytest.approx(1.3)
    assert np.array_equal(merged.pose[:k_s], traj.pose[:k_s])
    assert np.array_equal(merged.vel[:k_s], traj.vel[:k_s])
    # continuity at the splice: the splice sample and its successor are pinned
    assert np.allclose(merged.pose[k_s:k_s + 2], traj.pose[k_s:k_s + 2], atol=1e-6)
    assert np.allclose(merged.vel[k_s], traj.vel[k_s], atol=1e-6)
    assert np.array_equal(merged.pose[-1], traj.pose[-1])
    d, _ = query_distances(field, merged.positions[k_s:])
    assert d.min() >= 1.0
    assert rec.min_clearance >= 1.0
    assert state.field_revision == field.source_revision


def test_cycle_record_line():
    rec = CycleRecord(3, 0.0123, 1.3, 10.0, 8.5, 2.25, escalated=True)
    assert rec.line().split() == ["3", "0.012300", "1.300", "10", "8.5", "2.250000", "1"]
    assert len(CycleRecord.HEADER.split()) == 7
