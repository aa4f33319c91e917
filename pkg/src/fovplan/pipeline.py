"""End-to-end plan, blend, retime and optimize."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from fovplan.map import DistanceField, OccupancyGrid, compute_distance_field, query_distances
from fovplan.optimizer import OptimizeResult, OptimizerConfig, optimize
from fovplan.planner import PlanConfig, PlannedPath, SensorModel, plan
from fovplan.retime import MotionModel, Trajectory, insert_transition_segments, time_parameterize, trajectory_to_path


@dataclass
class PipelineConfig:
    sensor: SensorModel = field(default_factory=SensorModel)
    motion: MotionModel = field(default_factory=MotionModel)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    dt: float = 0.1
    heuristic: str = "fov"
    visibility: bool = True
    blend_deviation: float | None = None  # defaults to half of d_min

    def __post_init__(self):
        # the optimizer shares the sensor and motion limits
        self.optimizer = replace(self.optimizer, apex_angle=self.sensor.apex_angle,
                                 v_max=self.motion.v_max, a_max=self.motion.a_max,
                                 visibility=self.visibility and self.optimizer.visibility)


@dataclass
class PipelineResult:
    path: PlannedPath
    initial: Trajectory
    optimized: OptimizeResult
    trajectory: Trajectory
    timings: dict[str, float]

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


def plan_config(config: PipelineConfig, start, goal) -> PlanConfig:
    heuristic = config.heuristic
    if not config.visibility and heuristic == "fov":
        # vertical edges make the climb-aware bound inadmissible
        heuristic = "euclidean"
    return PlanConfig(start, goal, sensor=config.sensor, cost_params=config.optimizer.cost_params,
                      heuristic=heuristic, constrained=config.visibility)


def retime_polyline(traj: Trajectory, motion: MotionModel, dt: float | None = None) -> Trajectory:
    """Retime the polyline through ``traj``'s samples; the spatial path is unchanged."""
    return time_parameterize(trajectory_to_path(traj), motion, dt or traj.dt)


def run_pipeline(grid: OccupancyGrid, start, goal, config: PipelineConfig | None = None,
                 field: DistanceField | None = None) -> PipelineResult:
    config = config or PipelineConfig()
    timings = {}
    t0 = time.perf_counter()
    field = field or compute_distance_field(grid)
    timings["distance_field"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    path = plan(plan_config(config, start, goal), grid, field)
    timings["plan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dev = config.blend_deviation
    if dev is None:
        dev = config.optimizer.cost_params.d_min / 2
    blended = insert_transition_segments(path, dev)
    initial = time_parameterize(blended, config.motion, config.dt)
    timings["retime"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if len(initial) < 3:
        result = OptimizeResult(initial.copy(), 0.0, 0.0, 0.0, 0.0, 0, converged=True)
    else:
        result = optimize(initial, field, config.optimizer)
    timings["optimize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    final = retime_polyline(result.trajectory, config.motion, config.dt)
    timings["final_retime"] = time.perf_counter() - t0
    return PipelineResult(path, initial, result, final, timings)


def trajectory_stats(traj: Trajectory, field: DistanceField | None = None) -> dict[str, float]:
    ang = np.degrees(traj.segment_angles()) if len(traj) > 1 else np.zeros(1)
    d = np.diff(traj.positions, axis=0)
    stats = {
        "samples": float(len(traj)),
        "duration": traj.duration,
        "arc_length": traj.arc_length(),
        "planar_length": float(np.hypot(d[:, 0], d[:, 1]).sum()),
        "max_angle_deg": float(np.abs(ang).max()) if len(ang) else 0.0,
        "max_speed": float(traj.speeds().max()),
        "max_accel": float(np.linalg.norm(traj.acc[:, :3], axis=1).max()),
    }
    if field is not None:
        dist, _ = query_distances(field, traj.positions)
        stats["min_clearance"] = float(dist.min())
    return stats


def angle_profile(traj: Trajectory) -> np.ndarray:
    """Rows of (t, ascent angle in degrees) per consecutive sample pair."""
    if len(traj) < 2:
        return np.zeros((0, 2))
    return np.column_stack([traj.times[:-1], np.degrees(traj.segment_angles())])


def fd_accelerations(traj: Trajectory) -> np.ndarray:
    """Second differences of the sampled positions (interior samples)."""
    p = traj.positions
    if len(p) < 3:
        return np.zeros((0, 3))
    return (p[2:] - 2 * p[1:-1] + p[:-2]) / traj.dt**2


__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "angle_profile",
    "fd_accelerations",
    "plan_config",
    "retime_polyline",
    "run_pipeline",
    "trajectory_stats",
]
