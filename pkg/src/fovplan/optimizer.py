"""Covariant gradient descent on time-discretized trajectories.

The objective per spatial dimension is a quadratic control cost on
finite-difference accelerations plus per-sample state costs (obstacle
proximity, velocity and acceleration limit hinges).  Visibility enters as
a restoring force on segments whose climb angle leaves the sensor's
vertical field of view: each such segment is flattened by lowering its
altitude change and stretching its planar projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.linalg import cholesky_banded, cho_solve_banded

from fovplan.map import (
    DistanceField,
    ObstacleCostParams,
    distance_gradient,
    obstacle_cost,
    obstacle_cost_slope,
    query_distances,
)
from fovplan.retime import Trajectory, finite_difference_trajectory


@dataclass
class OptimizerConfig:
    w_o: float = 10.0
    w_a: float = 1.0
    w_vlim: float = 1.0
    w_v: float = 1e7
    step_size: float = 0.05
    max_iterations: int = 300
    convergence_tol: float = 1e-5
    metric_eps: float = 1e-6
    max_step: float = 0.25  # largest per-iteration displacement of a sample (m)
    divergence_patience: int = 10
    apex_angle: float = math.radians(30.0)
    v_max: float = 3.0
    a_max: float = 2.0
    cost_params: ObstacleCostParams = field(default_factory=ObstacleCostParams)
    visibility: bool = True
    stretch: str = "gradient"  # planar push of the flattening gradient: gradient | boundary | full
    line_search: bool = True  # halve rejected steps until the merit decreases
    projection_sweeps: int = 200  # final passes of the unit-weight flattening step; 0 disables
    angle_slack: float = math.radians(0.25)  # steps may not push the worst violation past this

    def __post_init__(self):
        for name in ("w_o", "w_a", "w_vlim", "w_v", "convergence_tol", "metric_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stretch not in ("gradient", "boundary", "full"):
            raise ValueError(f"unknown stretch rule {self.stretch!r}")


# ---------------------------------------------------------------------------
# control cost


def difference_operator(n: int, dt: float) -> sparse.csr_matrix:
    """Second-order central differences at the n-2 interior samples."""
    if n < 3:
        return sparse.csr_matrix((0, n))
    k = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n))
    return (k / dt**2).tocsr()


def control_matrix(n: int, dt: float) -> sparse.csr_matrix:
    k = difference_operator(n, dt)
    return (k.T @ k).tocsr()


def control_cost(pose: np.ndarray, dt: float) -> float:
    """Sum over dimensions of 0.5 * theta^T R theta."""
    pose = np.asarray(pose, dtype=float)
    if len(pose) < 3:
        return 0.0
    acc = (pose[2:] - 2 * pose[1:-1] + pose[:-2]) / dt**2
    return 0.5 * float(np.sum(acc**2))


def control_gradient(pose: np.ndarray, dt: float) -> np.ndarray:
    pose = np.asarray(pose, dtype=float)
    grad = np.zeros_like(pose)
    if len(pose) < 3:
        return grad
    acc = (pose[2:] - 2 * pose[1:-1] + pose[:-2]) / dt**2
    grad[2:] += acc / dt**2
    grad[1:-1] -= 2 * acc / dt**2
    grad[:-2] += acc / dt**2
    return grad


# ---------------------------------------------------------------------------
# state costs


def _velocities(pos: np.ndarray, dt: float) -> np.ndarray:
    return np.diff(pos, axis=0) / dt


def _accelerations(pos: np.ndarray, dt: float) -> np.ndarray:
    return (pos[2:] - 2 * pos[1:-1] + pos[:-2]) / dt**2


def state_costs(pose: np.ndarray, field: DistanceField, config: OptimizerConfig, dt: float):
    """Per-sample state cost q and a flag for samples clamped into the grid.

    Velocities are forward differences (the last sample has none) and
    accelerations central differences (interior samples only).
    """
    pos = np.asarray(pose, dtype=float)[:, :3]
    n = len(pos)
    dist, outside = query_distances(field, pos)
    q = config.w_o * obstacle_cost(np.maximum(dist, 0.0), config.cost_params)
    q = np.atleast_1d(np.asarray(q, dtype=float)).copy()
    if n > 1:
        v = _velocities(pos, dt)
        hv = np.maximum(0.0, np.abs(v) - config.v_max)
        q[:-1] += config.w_vlim * np.sum(hv**2, axis=1)
    if n > 2:
        a = _accelerations(pos, dt)
        ha = np.maximum(0.0, np.abs(a) - config.a_max)
        q[1:-1] += config.w_a * np.sum(ha**2, axis=1)
    return q, outside


def state_cost(pose: np.ndarray, field: DistanceField, config: OptimizerConfig, dt: float) -> float:
    return float(state_costs(pose, field, config, dt)[0].sum())


def limit_gradient(pose: np.ndarray, config: OptimizerConfig, dt: float) -> np.ndarray:
    """Gradient of the weighted velocity and acceleration hinge penalties."""
    pos = np.asarray(pose, dtype=float)[:, :3]
    grad = np.zeros_like(pos)
    if len(pos) > 1:
        v = _velocities(pos, dt)
        gv = config.w_vlim * 2 * np.maximum(0.0, np.abs(v) - config.v_max) * np.sign(v) / dt
        grad[1:] += gv
        grad[:-1] -= gv
    if len(pos) > 2:
        a = _accelerations(pos, dt)
        ga = config.w_a * 2 * np.maximum(0.0, np.abs(a) - config.a_max) * np.sign(a) / dt**2
        grad[2:] += ga
        grad[1:-1] -= 2 * ga
        grad[:-2] += ga
    return grad


def obstacle_gradient(pose: np.ndarray, field: DistanceField, config: OptimizerConfig,
                      step=None) -> np.ndarray:
    pos = np.asarray(pose, dtype=float)[:, :3]
    dist, _ = query_distances(field, pos)
    slope = obstacle_cost_slope(dist, config.cost_params)
    return config.w_o * np.asarray(slope)[:, None] * distance_gradient(field, pos, step)


# ---------------------------------------------------------------------------
# visibility


class Visibility(NamedTuple):
    satisfied: bool
    angle: float  # absolute climb angle of the segment (radians)


def visibility_violation(p_prev, p_curr, apex_angle: float) -> Visibility:
    d = np.asarray(p_curr, dtype=float)[:3] - np.asarray(p_prev, dtype=float)[:3]
    planar = math.hypot(d[0], d[1])
    if planar == 0.0:
        if d[2] == 0.0:
            return Visibility(True, 0.0)
        return Visibility(False, math.pi / 2)
    angle = abs(math.atan2(d[2], planar))
    return Visibility(angle <= apex_angle / 2, angle)


def visibility_gradient(p_prev, p_curr, apex_angle: float, w_v: float,
                        fallback_azimuth: float = 0.0, stretch: str = "full") -> tuple[np.ndarray, np.ndarray]:
    """Flattening gradients for one segment (zero when the segment is visible).

    Subtracting them (w_v = 1) lowers the altitude change by half of the
    violation and pushes the endpoints apart along the segment's planar
    direction.  The altitude part is w_v * violation / 4 per endpoint for
    every rule; the planar part per endpoint depends on ``stretch``:

    - ``"full"``: w_v * (violation / tan(phi/2) - L) / 2, floored at zero
    - ``"boundary"``: w_v * violation / (4 tan(phi/2)), which puts the
      halved segment exactly on the cone boundary
    - ``"gradient"``: w_v * violation * tan(phi/2) / 4, which makes the pair
      the exact gradient of ``w_v / 8 * violation**2``
    """
    zero = (np.zeros(3), np.zeros(3))
    if visibility_violation(p_prev, p_curr, apex_angle).satisfied:
        return zero
    a = np.asarray(p_prev, dtype=float)[:3]
    b = np.asarray(p_curr, dtype=float)[:3]
    tan_half = math.tan(apex_angle / 2)
    dz = b[2] - a[2]
    planar = math.hypot(b[0] - a[0], b[1] - a[1])
    dz_max = tan_half * planar
    excess = abs(dz) - dz_max
    if stretch == "boundary":
        push = excess / (2 * tan_half)
    elif stretch == "gradient":
        push = excess * tan_half / 2
    else:
        push = max(0.0, excess / tan_half - planar)
    alpha = math.atan2(b[1] - a[1], b[0] - a[0]) if planar > 0 else fallback_azimuth
    g_prev = w_v * np.array([
        math.cos(alpha) * push / 2,
        math.sin(alpha) * push / 2,
        math.copysign(1.0, -dz) * excess / 4,
    ])
    return g_prev, -g_prev


def visibility_forces(pose: np.ndarray, apex_angle: float, w_v: float,
                      stretch: str = "full") -> tuple[np.ndarray, float]:
    """Accumulated flattening gradients over all segments, and the largest violation angle."""
    pos = np.asarray(pose, dtype=float)[:, :3]
    grad = np.zeros_like(pos)
    d = np.diff(pos, axis=0)
    planar = np.hypot(d[:, 0], d[:, 1])
    angle = np.where(planar > 0, np.abs(np.arctan2(d[:, 2], planar)),
                     np.where(d[:, 2] != 0, math.pi / 2, 0.0))
    bad = np.flatnonzero(angle > apex_angle / 2)
    worst = float(angle.max() - apex_angle / 2) if len(angle) else 0.0
    if len(bad) == 0:
        return grad, max(worst, 0.0)
    az = np.arctan2(d[:, 1], d[:, 0])
    fallback = np.zeros(len(d))
    last = 0.0
    for i in range(len(d)):
        fallback[i] = last
        if planar[i] > 0:
            last = az[i]
    for i in bad:
        g_prev, g_curr = visibility_gradient(pos[i], pos[i + 1], apex_angle, w_v, fallback[i], stretch)
        grad[i] += g_prev
        grad[i + 1] += g_curr
    return grad, worst


def worst_violation(pose: np.ndarray, apex_angle: float) -> float:
    """Largest climb angle beyond the half apex angle (radians, 0 when visible)."""
    d = np.diff(np.asarray(pose, dtype=float)[:, :3], axis=0)
    if not len(d):
        return 0.0
    planar = np.hypot(d[:, 0], d[:, 1])
    angle = np.where(planar > 0, np.abs(np.arctan2(d[:, 2], planar)),
                     np.where(d[:, 2] != 0, math.pi / 2, 0.0))
    return max(float(angle.max()) - apex_angle / 2, 0.0)


def visibility_potential(pose: np.ndarray, apex_angle: float, w_v: float) -> float:
    """w_v / 8 times the summed squared altitude violations.

    Its gradient is the flattening gradient with ``stretch="gradient"``; for
    the other rules it shares the altitude part only.
    """
    pos = np.asarray(pose, dtype=float)[:, :3]
    d = np.diff(pos, axis=0)
    planar = np.hypot(d[:, 0], d[:, 1])
    excess = np.maximum(0.0, np.abs(d[:, 2]) - math.tan(apex_angle / 2) * planar)
    return float(w_v * np.sum(excess**2) / 8)


def project_visibility(pose: np.ndarray, apex_angle: float, free: np.ndarray,
                       stretch: str = "boundary", sweeps: int = 200, tol: float = 1e-9) -> int:
    """Apply unit-weight flattening steps to violated segments in place.

    Segments are visited in alternating sweep directions and each violated
    one is corrected immediately (pinned samples do not move).  Returns the
    number of sweeps used.
    """
    n = len(pose)
    half = apex_angle / 2
    fallback = 0.0
    for sweep in range(sweeps):
        order = range(n - 1) if sweep % 2 == 0 else range(n - 2, -1, -1)
        touched = False
        for i in order:
            a, b = pose[i, :3], pose[i + 1, :3]
            planar = math.hypot(b[0] - a[0], b[1] - a[1])
            if planar > 0:
                fallback = math.atan2(b[1] - a[1], b[0] - a[0])
            vis = visibility_violation(a, b, apex_angle)
            if vis.satisfied or vis.angle - half <= tol:
                continue
            g_prev, g_curr = visibility_gradient(a, b, apex_angle, 1.0, fallback, stretch)
            if free[i] and free[i + 1]:
                pose[i, :3] -= g_prev
                pose[i + 1, :3] -= g_curr
            elif free[i]:
                pose[i, :3] -= 2 * g_prev
            elif free[i + 1]:
                pose[i + 1, :3] -= 2 * g_curr
            else:
                continue
            touched = True
        if not touched:
            return sweep
    return sweeps


# ---------------------------------------------------------------------------
# optimizer


def objective(pose: np.ndarray, field: DistanceField, config: OptimizerConfig, dt: float) -> float:
    """Sum of state costs plus control costs (visibility excluded)."""
    return state_cost(pose, field, config, dt) + control_cost(pose, dt)


def merit(pose: np.ndarray, field: DistanceField, config: OptimizerConfig, dt: float) -> float:
    m = objective(pose, field, config, dt)
    if config.visibility:
        m += visibility_potential(pose, config.apex_angle, config.w_v)
    return m


def total_gradient(pose: np.ndarray, field: DistanceField, config: OptimizerConfig, dt: float):
    grad = control_gradient(pose, dt)
    grad[:, :3] += obstacle_gradient(pose, field, config)
    grad[:, :3] += limit_gradient(pose, config, dt)
    worst = 0.0
    if config.visibility:
        g_vis, worst = visibility_forces(pose, config.apex_angle, config.w_v, config.stretch)
        grad[:, :3] += g_vis
    return grad, worst


@dataclass
class OptimizeResult:
    trajectory: Trajectory
    objective_initial: float
    objective: float
    merit_initial: float
    merit: float
    iterations: int
    converged: bool = False
    diverged: bool = False
    clamped_samples: int = 0
    log: list[tuple[int, float, float, float]] = field(default_factory=list)


def _banded_metric(n_free_mask: np.ndarray, dt: float, eps: float):
    n = len(n_free_mask)
    r = control_matrix(n, dt)
    free = np.flatnonzero(n_free_mask)
    m = (r[free][:, free] + eps * sparse.identity(len(free))).todia()
    ab = np.zeros((3, len(free)))
    for off, row in zip(m.offsets, m.data):
        if 0 <= off <= 2:
            ab[2 - off, off:] = row[off:]
    return cholesky_banded(ab, lower=False)


def optimize(initial: Trajectory, field: DistanceField, config: OptimizerConfig | None = None,
             fixed_start: int = 1, fixed_end: int = 1, log: bool = False) -> OptimizeResult:
    """Refine ``initial`` with covariant gradient steps; endpoints stay fixed.

    ``fixed_start``/``fixed_end`` pin that many samples at each end.  The
    returned trajectory is the iterate with the lowest merit (objective
    plus the visibility potential), so it is never worse than the input.
    """
    config = config or OptimizerConfig()
    dt = initial.dt
    pose = initial.pose.copy()
    n = len(pose)
    free = np.ones(n, dtype=bool)
    free[:max(fixed_start, 1)] = False
    free[n - max(fixed_end, 1):] = False
    dist0, _ = query_distances(field, pose[[0, -1], :3])
    if np.any(dist0 <= 0.0):
        raise ValueError("trajectory endpoints lie inside an obstacle")

    obj0 = objective(pose, field, config, dt)
    m0 = merit(pose, field, config, dt)
    result_log = []
    if not free.any():
        return OptimizeResult(initial.copy(), obj0, obj0, m0, m0, 0, converged=True)

    chol = _banded_metric(free, dt, config.metric_eps)
    best_pose, best_m, best_obj = pose.copy(), m0, obj0
    prev_m = m0
    growth = 0
    converged = diverged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        grad, worst = total_gradient(pose, field, config, dt)
        step = cho_solve_banded((chol, False), grad[free])
        delta = config.step_size * step
        biggest = float(np.max(np.linalg.norm(delta[:, :3], axis=1))) if len(delta) else 0.0
        if biggest > config.max_step:
            delta *= config.max_step / biggest
        trial = pose.copy()
        trial[free] -= delta
        m = merit(trial, field, config, dt)
        if config.line_search:
            # tiny end segments barely register in the potential, so a step must
            # also keep the worst angle violation within the allowed slack
            limit = max(worst, config.angle_slack) if config.visibility else math.inf

            def rejected(m, trial):
                return m > prev_m or (config.visibility and
                                      worst_violation(trial, config.apex_angle) > limit)

            halvings = 0
            while rejected(m, trial) and halvings < 30:
                delta *= 0.5
                trial[free] = pose[free] - delta
                m = merit(trial, field, config, dt)
                halvings += 1
            if rejected(m, trial):
                converged = True
                break
        pose = trial
        if log:
            dist, _ = query_distances(field, pose[:, :3])
            result_log.append((it, objective(pose, field, config, dt), math.degrees(worst), float(dist.min())))
        if m < best_m:
            best_m, best_pose = m, pose.copy()
            best_obj = None
        growth = growth + 1 if m > prev_m else 0
        if growth >= config.divergence_patience:
            diverged = True
            break
        if m <= prev_m and (prev_m - m) <= config.convergence_tol * max(abs(prev_m), 1e-12):
            converged = True
            break
        prev_m = m
    if config.visibility and config.projection_sweeps > 0:
        projected = best_pose.copy()
        # the boundary rule converges in far fewer sweeps than the gradient rule
        if project_visibility(projected, config.apex_angle, free, "boundary",
                              config.projection_sweeps):
            m_proj = merit(projected, field, config, dt)
            # keep the guarantee of never returning something worse than the input
            if m_proj <= m0:
                best_pose, best_m, best_obj = projected, m_proj, None
    if best_obj is None:
        best_obj = objective(best_pose, field, config, dt)
    _, outside = query_distances(field, best_pose[:, :3])
    traj = finite_difference_trajectory(best_pose, dt)
    return OptimizeResult(traj, obj0, best_obj, m0, best_m, it, converged, diverged,
                          int(outside.sum()), result_log)
