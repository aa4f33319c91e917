"""Corner blending and time parameterization of lattice paths.

A waypoint list is turned into a rest-to-rest trajectory sampled at a
fixed step.  The speed profile is built over arc length from constant
acceleration pieces (accelerate, cruise, decelerate), so the spatial path
is followed exactly and only its timing is chosen here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fovplan.planner import PlannedPath

_EPS = 1e-9


@dataclass(frozen=True)
class MotionModel:
    v_max: float = 3.0
    a_max: float = 2.0
    yaw_rate_max: float = math.pi / 2

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.yaw_rate_max) <= 0:
            raise ValueError("motion limits must be strictly positive")


@dataclass
class Trajectory:
    """Poses, velocities and accelerations sampled every ``dt`` seconds.

    All three arrays are (N+1, 4) with columns x, y, z, yaw (and their rates).
    """

    dt: float
    pose: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        self.pose = np.atleast_2d(np.asarray(self.pose, dtype=float))
        self.vel = np.atleast_2d(np.asarray(self.vel, dtype=float))
        self.acc = np.atleast_2d(np.asarray(self.acc, dtype=float))
        if not (self.pose.shape == self.vel.shape == self.acc.shape) or self.pose.shape[1] != 4:
            raise ValueError("pose, vel and acc must all be (N+1, 4)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __len__(self):
        return len(self.pose)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.pose)) * self.dt

    @property
    def positions(self) -> np.ndarray:
        return self.pose[:, :3]

    @property
    def duration(self) -> float:
        return (len(self.pose) - 1) * self.dt

    def copy(self) -> "Trajectory":
        return Trajectory(self.dt, self.pose.copy(), self.vel.copy(), self.acc.copy())

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())

    def segment_angles(self) -> np.ndarray:
        """Ascent/descent angle of every consecutive sample pair (radians)."""
        d = np.diff(self.positions, axis=0)
        return np.arctan2(d[:, 2], np.hypot(d[:, 0], d[:, 1]))

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.vel[:, :3], axis=1)


def finite_difference_trajectory(pose: np.ndarray, dt: float) -> Trajectory:
    """Trajectory whose rates are central differences of the poses (one-sided at the ends)."""
    pose = np.asarray(pose, dtype=float)
    vel = np.zeros_like(pose)
    acc = np.zeros_like(pose)
    if len(pose) > 2:
        vel[1:-1] = (pose[2:] - pose[:-2]) / (2 * dt)
        acc[1:-1] = (pose[2:] - 2 * pose[1:-1] + pose[:-2]) / dt**2
    return Trajectory(dt, pose, vel, acc)


# ---------------------------------------------------------------------------
# corner blends


def insert_transition_segments(path: PlannedPath, max_deviation: float, samples: int = 8) -> PlannedPath:
    """Replace interior corners by sampled quadratic blends.

    The blend's control points are the corner and one cut point on each
    leg, so every sample stays inside the triangle they span and within
    ``max_deviation`` of the corner.  Collinear corners and corners next to
    in-place rotations are kept as they are.
    """
    wp = path.waypoints
    if len(wp) < 3 or max_deviation <= 0:
        return PlannedPath(wp.copy(), path.cost, path.expansions, list(path.headings))
    out = [wp[0]]
    for k in range(1, len(wp) - 1):
        prev, corner, nxt = wp[k - 1], wp[k], wp[k + 1]
        u1 = corner[:3] - prev[:3]
        u2 = nxt[:3] - corner[:3]
        l1, l2 = np.linalg.norm(u1), np.linalg.norm(u2)
        if l1 < _EPS or l2 < _EPS or np.linalg.norm(np.cross(u1 / l1, u2 / l2)) < 1e-9 and u1 @ u2 > 0:
            out.append(corner)
            continue
        c = min(max_deviation, l1 / 2, l2 / 2)
        p0 = np.empty(4)
        p2 = np.empty(4)
        p0[:3] = corner[:3] - c * u1 / l1
        p2[:3] = corner[:3] + c * u2 / l2
        p0[3] = corner[3] + (c / l1) * (prev[3] - corner[3])
        p2[3] = corner[3] + (c / l2) * (nxt[3] - corner[3])
        u = np.linspace(0.0, 1.0, samples + 1)[:, None]
        blend = np.empty((samples + 1, 4))
        blend[:, :3] = (1 - u) ** 2 * p0[:3] + 2 * u * (1 - u) * corner[:3] + u**2 * p2[:3]
        blend[:, 3] = ((1 - u) * p0[3] + u * p2[3])[:, 0]
        if np.linalg.norm(out[-1][:3] - blend[0, :3]) < _EPS:
            blend = blend[1:]
        out.extend(blend)
    out.append(wp[-1])
    return PlannedPath(np.array(out), path.cost, path.expansions, [])


# ---------------------------------------------------------------------------
# speed profile


def _segment_phases(va: float, vb: float, ds: float, v_max: float, a: float):
    """Accelerate/cruise/decelerate pieces covering ``ds`` from speed ``va`` to ``vb``."""
    peak = min(v_max, math.sqrt(max((2 * a * ds + va * va + vb * vb) / 2, 0.0)))
    peak = max(peak, va, vb)
    d1 = (peak * peak - va * va) / (2 * a)
    d3 = (peak * peak - vb * vb) / (2 * a)
    d2 = max(ds - d1 - d3, 0.0)
    phases = []
    if peak > va:
        phases.append((d1, va, a, (peak - va) / a))
    if d2 > 0 and peak > 0:
        phases.append((d2, peak, 0.0, d2 / peak))
    if peak > vb:
        phases.append((d3, peak, -a, (peak - vb) / a))
    return phases


def _vertex_curvature(pts: np.ndarray) -> np.ndarray:
    """Discrete curvature (turn angle over mean adjacent length) at each vertex."""
    kappa = np.zeros(len(pts))
    if len(pts) < 3:
        return kappa
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    unit = seg / lengths[:, None]
    cos_turn = np.clip(np.einsum("ij,ij->i", unit[:-1], unit[1:]), -1.0, 1.0)
    kappa[1:-1] = np.arccos(cos_turn) / (0.5 * (lengths[:-1] + lengths[1:]))
    kappa[kappa < 1e-9] = 0.0
    return kappa


def _vertex_speed_caps(pts: np.ndarray, model: MotionModel) -> np.ndarray:
    kappa = _vertex_curvature(pts)
    caps = np.full(len(pts), model.v_max)
    turning = kappa > 0
    caps[turning] = np.minimum(model.v_max, np.sqrt(model.a_max / math.sqrt(2) / kappa[turning]))
    return caps


def _segment_accels(pts: np.ndarray, model: MotionModel, caps: np.ndarray) -> np.ndarray:
    """Tangential acceleration limit per segment.

    The lateral acceleration at a vertex is at most cap**2 * kappa, and the
    tangential limit of the adjacent segments is what remains of ``a_max``.
    """
    lateral = caps**2 * _vertex_curvature(pts)
    worst = np.maximum(lateral[:-1], lateral[1:])
    return np.sqrt(np.maximum(model.a_max**2 - worst**2, 0.5 * model.a_max**2))


def speed_profile(pts: np.ndarray, model: MotionModel, v_start: float = 0.0, v_end: float = 0.0):
    """Vertex speeds and constant-acceleration phases along a polyline.

    Vertex speeds are capped by ``v_max`` and by turning, with at most
    ``a_max / sqrt(2)`` of lateral acceleration; segments next to a turning
    vertex get the remaining tangential budget, so the combined
    acceleration stays within ``a_max``.  Returns the phases as rows (s0, v0, accel,
    duration).
    """
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    v = _vertex_speed_caps(pts, model)
    acc_lim = _segment_accels(pts, model, v)
    v[0] = min(v_start, v[0])
    v[-1] = min(v_end, model.v_max)
    for j in range(len(lengths)):
        v[j + 1] = min(v[j + 1], math.sqrt(v[j] ** 2 + 2 * acc_lim[j] * lengths[j]))
    for j in range(len(lengths) - 1, -1, -1):
        v[j] = min(v[j], math.sqrt(v[j + 1] ** 2 + 2 * acc_lim[j] * lengths[j]))
    s = np.concatenate([[0.0], np.cumsum(lengths)])
    phases = []
    for j, ds in enumerate(lengths):
        offset = s[j]
        for d, v0, acc, dur in _segment_phases(v[j], v[j + 1], ds, model.v_max, acc_lim[j]):
            phases.append((offset, v0, acc, dur))
            offset += d
    return v, phases


def trapezoid_duration(distance: float, v_max: float, a_max: float) -> float:
    """Closed-form rest-to-rest duration along a straight line."""
    if distance <= 0:
        return 0.0
    if distance >= v_max**2 / a_max:
        return v_max / a_max + distance / v_max
    return 2.0 * math.sqrt(distance / a_max)


# ---------------------------------------------------------------------------
# sampling


def _split_chunks(wp: np.ndarray):
    """Alternating translation polylines and in-place rotations."""
    chunks = []
    cur = [wp[0]]
    for row in wp[1:]:
        if np.linalg.norm(row[:3] - cur[-1][:3]) < _EPS:
            if abs(row[3] - cur[-1][3]) > _EPS:
                if len(cur) > 1:
                    chunks.append(("move", np.array(cur)))
                chunks.append(("rotate", np.array([cur[-1], row])))
                cur = [row]
            continue
        cur.append(row)
    if len(cur) > 1:
        chunks.append(("move", np.array(cur)))
    return chunks


def time_parameterize(path, model: MotionModel | None = None, dt: float = 0.1,
                      v_start: float = 0.0) -> Trajectory:
    """Rest-to-rest trajectory along ``path`` sampled every ``dt`` seconds.

    ``path`` is a PlannedPath or an (M, 4) waypoint array.  Acceleration at
    a sample is the profile acceleration just before the sample instant;
    yaw follows the waypoint yaws with its rate clamped to
    ``yaw_rate_max``.  ``v_start`` lets a suffix start at flight speed.
    """
    model = model or MotionModel()
    if dt <= 0:
        raise ValueError("dt must be positive")
    wp = path.waypoints if isinstance(path, PlannedPath) else np.atleast_2d(np.asarray(path, float))
    if len(wp) == 0:
        raise ValueError("empty path")

    # timeline pieces: (t0, duration, kind, data)
    pieces = []
    t = 0.0
    for kind, data in _split_chunks(wp):
        if kind == "move":
            pts = data[:, :3]
            lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            arc = np.concatenate([[0.0], np.cumsum(lengths)])
            vstart = v_start if not pieces else 0.0
            _, phases = speed_profile(pts, model, vstart, 0.0)
            ph = np.array(phases, dtype=float).reshape(-1, 4)
            dur = float(ph[:, 3].sum())
            pieces.append((t, dur, kind, (data, arc, ph)))
        else:
            dur = abs(data[1, 3] - data[0, 3]) / model.yaw_rate_max
            pieces.append((t, dur, kind, data))
        t += dur
    total = t
    n = 0 if total <= 0 else int(math.floor(total / dt)) + 1
    times = np.arange(n + 1) * dt

    pose = np.zeros((n + 1, 4))
    vel = np.zeros((n + 1, 4))
    acc = np.zeros((n + 1, 4))
    target_yaw = np.zeros(n + 1)
    final = wp[-1]
    pose[:, :3] = final[:3]
    target_yaw[:] = final[3]
    piece_ends = np.array([p[0] + p[1] for p in pieces]) if pieces else np.zeros(0)
    for k, tk in enumerate(times):
        if not pieces:
            break
        if tk <= 0.0:
            _, _, kind, data = pieces[0]
            rows = data[0] if kind == "move" else data
            pose[k, :3] = rows[0, :3]
            target_yaw[k] = rows[0, 3]
            if kind == "move" and v_start > 0:
                u = (rows[1, :3] - rows[0, :3]) / max(data[1][1], _EPS)
                vel[k, :3] = min(v_start, model.v_max) * u
            continue
        i = int(np.searchsorted(piece_ends, tk, side="left"))
        if i >= len(pieces):
            break
        t0, dur, kind, data = pieces[i]
        tau = tk - t0
        if kind == "rotate":
            pose[k, :3] = data[0, :3]
            frac = min(tau / dur, 1.0) if dur > 0 else 1.0
            target_yaw[k] = data[0, 3] + frac * (data[1, 3] - data[0, 3])
            continue
        rows, arc, ph = data
        ends = np.cumsum(ph[:, 3])
        j = min(int(np.searchsorted(ends, tau, side="left")), len(ph) - 1)
        s0, v0, a, _ = ph[j]
        tj = tau - (ends[j] - ph[j, 3])
        v = max(v0 + a * tj, 0.0)
        s = min(s0 + v0 * tj + 0.5 * a * tj * tj, arc[-1])
        seg = min(max(int(np.searchsorted(arc, s, side="right")) - 1, 0), len(arc) - 2)
        seg_len = arc[seg + 1] - arc[seg]
        unit = (rows[seg + 1, :3] - rows[seg, :3]) / max(seg_len, _EPS)
        frac = (s - arc[seg]) / max(seg_len, _EPS)
        pose[k, :3] = rows[seg, :3] + frac * (rows[seg + 1, :3] - rows[seg, :3])
        target_yaw[k] = np.interp(s, arc, rows[:, 3])
        vel[k, :3] = v * unit
        acc[k, :3] = a * unit

    yaw = _clamp_yaw(target_yaw, final[3], model.yaw_rate_max * dt)
    extra = len(yaw) - (n + 1)
    if extra:
        pose = np.vstack([pose, np.tile(pose[-1], (extra, 1))])
        vel = np.vstack([vel, np.zeros((extra, 4))])
        acc = np.vstack([acc, np.zeros((extra, 4))])
    pose[:, 3] = yaw
    vel[1:, 3] = np.diff(yaw) / dt
    acc[1:, 3] = np.diff(vel[:, 3]) / dt
    return Trajectory(dt, pose, vel, acc)


def _clamp_yaw(target: np.ndarray, final: float, max_step: float) -> np.ndarray:
    out = [float(target[0])]
    for tk in target[1:]:
        out.append(out[-1] + float(np.clip(tk - out[-1], -max_step, max_step)))
    # hold position until the yaw settles, then one extra sample for zero rate
    while abs(final - out[-1]) > 1e-12:
        out.append(out[-1] + float(np.clip(final - out[-1], -max_step, max_step)))
    if len(out) > 1 and out[-1] != out[-2]:
        out.append(out[-1])
    return np.array(out)


def trajectory_to_path(traj: Trajectory) -> np.ndarray:
    """Waypoint array through the trajectory samples, duplicates removed."""
    keep = [0]
    for k in range(1, len(traj)):
        prev = traj.pose[keep[-1]]
        row = traj.pose[k]
        if np.linalg.norm(row[:3] - prev[:3]) < _EPS and abs(row[3] - prev[3]) < _EPS:
            continue
        keep.append(k)
    return traj.pose[keep].copy()


# ---------------------------------------------------------------------------
# trajectory files

COLUMNS = ("t", "x", "y", "z", "yaw", "vx", "vy", "vz", "yaw_rate", "ax", "ay", "az")


def format_trajectory(traj: Trajectory) -> str:
    lines = [f"# dt={traj.dt!r} samples={len(traj)}", "# " + " ".join(COLUMNS)]
    for t, p, v, a in zip(traj.times, traj.pose, traj.vel, traj.acc):
        vals = [t, *p, *v, *a[:3]]
        lines.append(" ".join(f"{x:.9g}" for x in vals))
    return "\n".join(lines) + "\n"


def parse_trajectory(text: str) -> Trajectory:
    dt = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("dt="):
                    dt = float(tok[3:])
            continue
        parts = line.split()
        if len(parts) != len(COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(parts)}")
        rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError("trajectory file has no samples")
    arr = np.array(rows)
    if dt is None:
        dt = float(arr[1, 0] - arr[0, 0]) if len(arr) > 1 else 0.1
    acc = np.zeros((len(arr), 4))
    acc[:, :3] = arr[:, 9:12]
    return Trajectory(dt, arr[:, 1:5], arr[:, 5:9], acc)


def write_trajectory(traj: Trajectory, dest) -> None:
    Path(dest).write_text(format_trajectory(traj))


def read_trajectory(src) -> Trajectory:
    return parse_trajectory(Path(src).read_text())
