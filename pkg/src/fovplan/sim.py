"""Closed-loop execution with a PD follower and limited-range sensing.

The follower stands in for a real flight controller: it tracks commanded
position and velocity with a saturated PD law.  Sensing copies true
occupancy into the known map for cells inside the sensor range and field
of view, and can drive the replanning loop from those updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fovplan.map import OccupancyGrid, compute_distance_field, query_distances
from fovplan.planner import FRONT_FACING, SensorModel, wrap_angle
from fovplan.replan import CycleRecord, ExecutionState, ReplanConfig, replan_cycle
from fovplan.retime import Trajectory


@dataclass
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    yaw: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))
                and math.isfinite(self.yaw) and math.isfinite(self.time)):
            raise ValueError("vehicle state must be finite")


@dataclass(frozen=True)
class FollowerGains:
    kp: float = 4.0
    kd: float = 3.0
    yaw_gain: float = 4.0  # first-order yaw response (1/s)
    yaw_rate_max: float = math.pi / 2


def follower_step(state: VehicleState, cmd_pose, cmd_vel, dt: float,
                  gains: FollowerGains = FollowerGains(), a_max: float = 2.0) -> VehicleState:
    """Advance one step with a saturated PD law and semi-implicit Euler."""
    cmd_pose = np.asarray(cmd_pose, dtype=float)
    cmd_vel = np.asarray(cmd_vel, dtype=float)
    acc = gains.kp * (cmd_pose[:3] - state.position) + gains.kd * (cmd_vel[:3] - state.velocity)
    norm = float(np.linalg.norm(acc))
    if norm > a_max:
        acc *= a_max / norm
    vel = state.velocity + acc * dt
    pos = state.position + vel * dt
    yaw = state.yaw
    if len(cmd_pose) > 3:
        err = float(wrap_angle(cmd_pose[3] - state.yaw))
        rate = float(np.clip(gains.yaw_gain * err, -gains.yaw_rate_max, gains.yaw_rate_max))
        yaw = state.yaw + rate * dt
    return VehicleState(pos, vel, yaw, state.time + dt)


# ---------------------------------------------------------------------------
# sensing


def visible_cells(centers: np.ndarray, position, yaw: float, sensor: SensorModel,
                  sensor_range: float) -> np.ndarray:
    """Mask of cell centers inside the range sphere and the field of view."""
    d = centers - np.asarray(position, dtype=float)[None, :3]
    dist = np.linalg.norm(d, axis=1)
    planar = np.hypot(d[:, 0], d[:, 1])
    elev = np.abs(np.arctan2(d[:, 2], planar))
    mask = (dist <= sensor_range) & ((elev <= sensor.apex_angle / 2 + 1e-12) | (dist < 1e-9))
    if sensor.mode == FRONT_FACING and sensor.horizontal_fov < 2 * math.pi:
        az = np.abs(wrap_angle(np.arctan2(d[:, 1], d[:, 0]) - yaw))
        mask &= (az <= sensor.horizontal_fov / 2) | (planar < 1e-9)
    return mask


class Sensor:
    """Reveals true obstacle cells into a known map."""

    def __init__(self, true_grid: OccupancyGrid, sensor: SensorModel, sensor_range: float):
        self.sensor = sensor
        self.range = sensor_range
        self.cells = np.argwhere(true_grid.occupied)
        self.centers = (np.asarray(true_grid.origin) + (self.cells + 0.5) * true_grid.cell_sizes
                        if len(self.cells) else np.zeros((0, 3)))

    def reveal(self, known: OccupancyGrid, position, yaw: float) -> OccupancyGrid:
        if not len(self.cells):
            return known
        seen = visible_cells(self.centers, position, yaw, self.sensor, self.range)
        idx = self.cells[seen]
        if not len(idx):
            return known
        new = ~known.occupied[idx[:, 0], idx[:, 1], idx[:, 2]]
        if not new.any():
            return known
        mask = np.zeros(known.dims, dtype=bool)
        fresh = idx[new]
        mask[fresh[:, 0], fresh[:, 1], fresh[:, 2]] = True
        return known.with_occupied(mask)


# ---------------------------------------------------------------------------
# flight log


@dataclass
class SimConfig:
    gains: FollowerGains = field(default_factory=FollowerGains)
    a_max: float = 2.0
    vehicle_radius: float = 0.5
    sensor: SensorModel = field(default_factory=SensorModel)
    sensor_range: float = 15.0
    replan: ReplanConfig | None = None
    cycle_duration: float = 0.2  # nominal duration of a replanning cycle (s)
    measured_timing: bool = False  # splice with measured wall time instead of the nominal duration


@dataclass
class FlightLog:
    dt: float
    times: np.ndarray
    commanded: np.ndarray  # (K, 4)
    actual: np.ndarray  # (K, 4)
    velocity: np.ndarray  # (K, 3)
    clearance: np.ndarray  # (K,) true-scene clearance of the vehicle
    command_clearance: np.ndarray  # (K,) true-scene clearance of the commanded sample
    collision: bool = False
    collision_step: int | None = None
    revelation_times: list[float] = field(default_factory=list)
    cycles: list[CycleRecord] = field(default_factory=list)
    publish_times: list[float] = field(default_factory=list)
    published: list[Trajectory] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.commanded[:, :3] - self.actual[:, :3], axis=1)

    def summary(self) -> dict[str, float]:
        mean, rmse = ate(self)
        speeds = np.linalg.norm(self.velocity, axis=1)
        return {
            "steps": float(len(self)),
            "ate_mean": mean,
            "ate_rmse": rmse,
            "v_max": float(speeds.max()),
            "collision": float(self.collision),
            "min_clearance": float(self.clearance.min()),
            "revelations": float(len(self.revelation_times)),
            "cycles": float(len(self.cycles)),
            "max_cycle_time": max((c.wall_time for c in self.cycles), default=0.0),
        }

    def to_text(self) -> str:
        lines = [f"# dt={self.dt!r}",
                 "# t cmd_x cmd_y cmd_z cmd_yaw x y z yaw vx vy vz clearance error"]
        for t, c, a, v, cl, e in zip(self.times, self.commanded, self.actual, self.velocity,
                                     self.clearance, self.errors):
            vals = [t, *c, *a, *v, cl, e]
            lines.append(" ".join(f"{x:.9g}" for x in vals))
        for key, value in self.summary().items():
            lines.append(f"# summary {key}={value:.9g}")
        return "\n".join(lines) + "\n"

    def write(self, dest) -> None:
        Path(dest).write_text(self.to_text())


def ate(log) -> tuple[float, float]:
    """Mean and RMS Euclidean position error between commanded and flown samples."""
    errors = log.errors if isinstance(log, FlightLog) else np.asarray(log, dtype=float)
    if errors.size == 0:
        raise ValueError("empty flight log")
    return float(errors.mean()), float(np.sqrt(np.mean(errors**2)))


# ---------------------------------------------------------------------------
# simulation


def simulate(trajectory: Trajectory, true_grid: OccupancyGrid, known_grid: OccupancyGrid | None = None,
             sensor_range: float | None = None, config: SimConfig | None = None) -> FlightLog:
    """Fly ``trajectory`` with the follower, revealing obstacles as they come into view.

    With ``config.replan`` set, a reoptimization cycle starts whenever the
    previous one has been published; its result replaces the active
    trajectory ``cycle_duration`` seconds after the cycle started.
    """
    config = config or SimConfig()
    if sensor_range is not None:
        config = SimConfig(**{**config.__dict__, "sensor_range": sensor_range})
    known = known_grid if known_grid is not None else true_grid
    dt = trajectory.dt
    true_field = compute_distance_field(true_grid)
    sensor = Sensor(true_grid, config.sensor, config.sensor_range)
    traj = trajectory
    p0 = traj.pose[0]
    state = VehicleState(p0[:3], traj.vel[0, :3], float(p0[3]), 0.0)
    exec_state = ExecutionState(0.0, config.cycle_duration, field_revision=None)
    known_field = compute_distance_field(known)
    exec_state.field_revision = known_field.source_revision if config.replan else None

    times, cmds, acts, vels = [], [], [], []
    revelations: list[float] = []
    cycles: list[CycleRecord] = []
    publish_times: list[float] = []
    published: list[Trajectory] = []
    pending: tuple[int, Trajectory] | None = None
    next_cycle = 0
    k = 0
    max_steps = 100 * len(trajectory) + 1000
    while k < len(traj) and k < max_steps:
        t = k * dt
        grown = sensor.reveal(known, state.position, state.yaw)
        if grown is not known:
            known = grown
            known_field = compute_distance_field(known)
            revelations.append(t)
        if pending is not None and k >= pending[0]:
            traj = pending[1]
            published.append(traj)
            publish_times.append(t)
            pending = None
        if config.replan is not None and pending is None and k >= next_cycle:
            exec_state.current_time = t
            merged, rec = replan_cycle(exec_state, traj, known_field, config.replan, grid=known,
                                       index=len(cycles))
            cycles.append(rec)
            last = rec.wall_time if config.measured_timing else config.cycle_duration
            exec_state.last_cycle_duration = last
            delay = max(1, int(math.ceil(config.cycle_duration / dt - 1e-9)))
            if rec.changed:
                pending = (k + delay, merged)
            next_cycle = k + delay
        cmd_pose = traj.pose[k]
        cmd_vel = traj.vel[k, :3]
        times.append(t)
        cmds.append(cmd_pose.copy())
        acts.append(np.r_[state.position, state.yaw])
        vels.append(state.velocity.copy())
        state = follower_step(state, cmd_pose, cmd_vel, dt, config.gains, config.a_max)
        k += 1

    acts = np.array(acts)
    cmds = np.array(cmds)
    clearance, _ = query_distances(true_field, acts[:, :3])
    cmd_clear, _ = query_distances(true_field, cmds[:, :3])
    hit = np.flatnonzero(clearance < config.vehicle_radius)
    return FlightLog(dt, np.array(times), cmds, acts, np.array(vels), clearance, cmd_clear,
                     bool(len(hit)), int(hit[0]) if len(hit) else None, revelations, cycles,
                     publish_times, published)
