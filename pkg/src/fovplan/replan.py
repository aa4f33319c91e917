"""Receding reoptimization of the unexecuted part of a trajectory.

A cycle picks a splice time far enough ahead to finish before the vehicle
gets there, reoptimizes everything after it against the newest distance
field and stitches the result to the untouched prefix.  When local
reoptimization cannot clear a newly seen obstacle the suffix is replanned
on the lattice from the splice point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from fovplan.map import DistanceField, OccupancyGrid, query_distances
from fovplan.optimizer import OptimizerConfig, merit, optimize
from fovplan.planner import (
    PLANAR_DIRS,
    PlanConfig,
    PlanningError,
    SensorModel,
    plan,
)
from fovplan.retime import MotionModel, Trajectory, finite_difference_trajectory, time_parameterize


class GoalInfeasible(PlanningError):
    """The goal is now within ``d_min`` of an obstacle."""


@dataclass
class ReplanConfig:
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(max_iterations=10))
    sensor: SensorModel = field(default_factory=SensorModel)
    motion: MotionModel = field(default_factory=MotionModel)
    overhead: float = 0.1  # fractional safety margin on the cycle duration estimate
    initial_cycle_estimate: float = 0.2
    escalate: bool = True  # lattice replanning when reoptimization leaves the suffix unsafe

    def __post_init__(self):
        if self.overhead < 0 or self.initial_cycle_estimate < 0:
            raise ValueError("overhead and cycle estimate must be nonnegative")
        self.optimizer = replace(self.optimizer, apex_angle=self.sensor.apex_angle,
                                 v_max=self.motion.v_max, a_max=self.motion.a_max)


@dataclass
class ExecutionState:
    current_time: float = 0.0
    last_cycle_duration: float = 0.2
    executed_prefix: Trajectory | None = None
    field_revision: int | None = None  # map revision the active trajectory was optimized against

    def __post_init__(self):
        if self.last_cycle_duration < 0:
            raise ValueError("cycle duration must be nonnegative")


@dataclass
class CycleRecord:
    index: int
    wall_time: float
    splice_time: float
    objective_before: float
    objective_after: float
    min_clearance: float
    escalated: bool = False
    changed: bool = False

    HEADER = "cycle wall_time splice_time objective_before objective_after min_clearance escalated"

    def line(self) -> str:
        return (f"{self.index} {self.wall_time:.6f} {self.splice_time:.3f} {self.objective_before:.9g} "
                f"{self.objective_after:.9g} {self.min_clearance:.6f} {int(self.escalated)}")


def splice_time(current_time: float, last_cycle_duration: float, dt: float, overhead: float = 0.1) -> float:
    """Earliest grid time after the padded cycle duration."""
    raw = current_time + (1.0 + overhead) * last_cycle_duration
    k = math.ceil(raw / dt - 1e-9)
    return k * dt


def _suffix_clearance(pose: np.ndarray, field: DistanceField) -> float:
    d, _ = query_distances(field, pose[:, :3])
    return float(d.min()) if len(d) else math.inf


def _nearest_heading(direction) -> int | None:
    d = np.asarray(direction, dtype=float)[:2]
    if np.hypot(*d) < 1e-9:
        return None
    az = math.atan2(d[1], d[0])
    return int(round(az / (math.pi / 4))) % len(PLANAR_DIRS)


def _stitch(traj: Trajectory, k_s: int, suffix_pose: np.ndarray, pinned: int) -> Trajectory:
    """Prefix samples before k_s unchanged; pinned suffix samples keep their rates."""
    pose = np.vstack([traj.pose[:k_s], suffix_pose])
    fd = finite_difference_trajectory(pose, traj.dt)
    vel, acc = fd.vel, fd.acc
    keep = min(k_s + pinned, len(traj))
    vel[:keep] = traj.vel[:keep]
    acc[:keep] = traj.acc[:keep]
    return Trajectory(traj.dt, pose, vel, acc)


def _lattice_suffix(traj: Trajectory, k_s: int, goal, grid: OccupancyGrid, field: DistanceField,
                    config: ReplanConfig) -> np.ndarray | None:
    """Suffix poses from a fresh lattice plan starting at the last pinned sample."""
    anchor = traj.pose[k_s + 1]
    heading = _nearest_heading(traj.pose[k_s + 1, :3] - traj.pose[k_s, :3])
    pc = PlanConfig(tuple(anchor), tuple(goal), sensor=config.sensor,
                    cost_params=config.optimizer.cost_params)
    try:
        path = plan(pc, grid, field, initial_heading=heading)
    except PlanningError:
        return None
    wp = path.waypoints.copy()
    wp[0] = anchor
    wp[-1, :3] = np.asarray(goal, dtype=float)[:3]
    v0 = float(np.linalg.norm(traj.vel[k_s + 1, :3]))
    sub = time_parameterize(wp, config.motion, traj.dt, v_start=v0)
    return np.vstack([traj.pose[k_s:k_s + 1], sub.pose])


def replan_cycle(state: ExecutionState, trajectory: Trajectory, field: DistanceField,
                 config: ReplanConfig | None = None, grid: OccupancyGrid | None = None,
                 index: int = 0) -> tuple[Trajectory, CycleRecord]:
    """One reoptimization cycle; returns the merged trajectory and its log record.

    ``grid`` enables lattice escalation.  Samples before the splice time are
    returned bit-identical.  The field's revision is remembered in
    ``state`` so an unchanged map makes later cycles no-ops.
    """
    config = config or ReplanConfig()
    t0 = time.perf_counter()
    dt = trajectory.dt
    t_s = splice_time(state.current_time, state.last_cycle_duration, dt, config.overhead)
    k_s = int(round(t_s / dt))
    n = len(trajectory)

    def record(before, after, clear, escalated=False, changed=False):
        return CycleRecord(index, time.perf_counter() - t0, t_s, before, after, clear, escalated, changed)

    if k_s + 2 >= n:
        return trajectory, record(math.nan, math.nan, math.nan)
    goal = trajectory.pose[-1]
    gd, _ = query_distances(field, goal[None, :3])
    if gd[0] < config.optimizer.cost_params.d_min:
        raise GoalInfeasible(f"goal {goal[:3]} is {gd[0]:.3f} m from an obstacle")

    suffix = trajectory.pose[k_s:]
    before = merit(suffix, field, config.optimizer, dt)
    if state.field_revision is not None and state.field_revision == field.source_revision:
        return trajectory, record(before, before, _suffix_clearance(suffix, field))
    state.field_revision = field.source_revision

    d_min = config.optimizer.cost_params.d_min
    sub = Trajectory(dt, suffix, np.zeros_like(suffix), np.zeros_like(suffix))
    res = optimize(sub, field, config.optimizer, fixed_start=2, fixed_end=1)
    new_suffix = res.trajectory.pose
    after = res.merit
    escalated = False
    if res.merit > before:
        new_suffix, after = suffix, before
    clear = _suffix_clearance(new_suffix[2:], field)
    if clear < d_min and config.escalate and grid is not None:
        alt = _lattice_suffix(trajectory, k_s, goal, grid, field, config)
        if alt is not None:
            sub = Trajectory(dt, alt, np.zeros_like(alt), np.zeros_like(alt))
            res = optimize(sub, field, config.optimizer, fixed_start=2, fixed_end=1)
            alt_clear = _suffix_clearance(res.trajectory.pose[2:], field)
            if alt_clear > clear:
                new_suffix, after, clear, escalated = res.trajectory.pose, res.merit, alt_clear, True
    merged = _stitch(trajectory, k_s, new_suffix, 2)
    return merged, record(before, after, clear, escalated, True)
