"""Lattice A* on the anisotropic grid with a flight-heading dimension.

Search states are (cell, heading) pairs.  The heading is the planar
direction of the edge that reached the cell, one of eight 45 degree steps;
successors may turn by at most one step.  Pure vertical edges are removed,
so every edge climbs or descends at most at the sensor's half apex angle.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from fovplan.map import (
    DistanceField,
    GridRangeError,
    ObstacleCostParams,
    OccupancyGrid,
    obstacle_cost,
)

WILDCARD = 8
N_HEADINGS = 8
# planar unit steps for heading indices 0..7, counter-clockwise from +x
PLANAR_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

OMNIDIRECTIONAL = "omnidirectional"
FRONT_FACING = "front_facing"


class PlanningError(RuntimeError):
    pass


class InfeasibleEndpointError(PlanningError):
    pass


class NoPathError(PlanningError):
    pass


@dataclass(frozen=True)
class SensorModel:
    apex_angle: float = math.radians(30.0)
    horizontal_fov: float = 2 * math.pi
    mode: str = OMNIDIRECTIONAL

    def __post_init__(self):
        if not 0 < self.apex_angle <= math.pi / 2 + 1e-12:
            raise ValueError(f"apex angle must lie in (0, pi/2], got {self.apex_angle}")
        if not 0 < self.horizontal_fov <= 2 * math.pi + 1e-12:
            raise ValueError(f"horizontal FoV must lie in (0, 2 pi], got {self.horizontal_fov}")
        if self.mode not in (OMNIDIRECTIONAL, FRONT_FACING):
            raise ValueError(f"unknown sensor mode {self.mode!r}")

    @property
    def max_slope(self) -> float:
        return math.tan(self.apex_angle / 2)


@dataclass(frozen=True)
class SearchNode:
    cell: tuple[int, int, int]
    heading: int = WILDCARD

    def __post_init__(self):
        if not (0 <= self.heading < N_HEADINGS or self.heading == WILDCARD):
            raise ValueError(f"invalid heading {self.heading}")


class Edge(NamedTuple):
    offset: tuple[int, int, int]
    heading: int
    length: float


@dataclass
class PlannedPath:
    waypoints: np.ndarray  # (M, 4): x, y, z, yaw
    cost: float = 0.0
    expansions: int = 0
    headings: list[int] = field(default_factory=list)  # per segment, -1 for in-place moves

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if self.waypoints.shape[1] != 4:
            raise ValueError("waypoints must be (M, 4) rows of x, y, z, yaw")

    def __len__(self):
        return len(self.waypoints)

    @property
    def positions(self) -> np.ndarray:
        return self.waypoints[:, :3]

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())


@dataclass
class PlanConfig:
    start: Sequence[float]
    goal: Sequence[float]
    sensor: SensorModel = field(default_factory=SensorModel)
    obstacle_weight: float = 1.0
    cost_params: ObstacleCostParams = field(default_factory=ObstacleCostParams)
    heuristic: str = "fov"  # fov | euclidean | none
    constrained: bool = True  # False adds the two vertical edges back

    def __post_init__(self):
        if self.obstacle_weight < 0:
            raise ValueError("obstacle weight must be nonnegative")
        if self.heuristic not in ("fov", "euclidean", "none"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")
        self.start = tuple(float(v) for v in self.start)
        self.goal = tuple(float(v) for v in self.goal)
        if len(self.start) != 4 or len(self.goal) != 4:
            raise ValueError("start and goal are x, y, z, yaw")


# ---------------------------------------------------------------------------
# lookup tables


def planar_heading(dx: int, dy: int) -> int:
    return PLANAR_DIRS.index((int(np.sign(dx)), int(np.sign(dy))))


def heading_step(a: int, b: int) -> int:
    d = (a - b) % N_HEADINGS
    return min(d, N_HEADINGS - d)


@dataclass(frozen=True)
class EdgeTables:
    offsets: np.ndarray  # (E, 3) int
    headings: np.ndarray  # (E,), WILDCARD for vertical edges
    lengths: np.ndarray  # (E,) metres
    allowed: np.ndarray  # (9, E) bool; row WILDCARD is the start row

    def allowed_edges(self, heading: int) -> np.ndarray:
        return np.flatnonzero(self.allowed[heading])


def build_luts(sensor: SensorModel, grid_spec, constrained: bool = True) -> EdgeTables:
    """Edge geometry and heading-transition tables.

    ``grid_spec`` is an OccupancyGrid or a ``(cell_size_xy, cell_size_z)``
    pair.  Edge order is fixed (heading-major, then dz in -1, 0, 1), so the
    tables are identical for identical inputs.
    """
    vxy, vz = _cell_sizes(grid_spec)
    offsets, headings = [], []
    for h, (dx, dy) in enumerate(PLANAR_DIRS):
        for dz in (-1, 0, 1):
            offsets.append((dx, dy, dz))
            headings.append(h)
    if not constrained:
        offsets += [(0, 0, -1), (0, 0, 1)]
        headings += [WILDCARD, WILDCARD]
    offsets = np.array(offsets, dtype=np.int64)
    headings = np.array(headings, dtype=np.int64)
    scale = np.array([vxy, vxy, vz])
    lengths = np.linalg.norm(offsets * scale, axis=1)
    allowed = np.zeros((N_HEADINGS + 1, len(offsets)), dtype=bool)
    for h in range(N_HEADINGS):
        for e, eh in enumerate(headings):
            allowed[h, e] = eh == WILDCARD or heading_step(h, eh) <= 1
    allowed[WILDCARD, :] = True
    for arr in (offsets, headings, lengths, allowed):
        arr.flags.writeable = False
    del sensor  # the sensor enters only through the grid's vertical cell size
    return EdgeTables(offsets, headings, lengths, allowed)


def _cell_sizes(grid_spec) -> tuple[float, float]:
    if isinstance(grid_spec, OccupancyGrid):
        return grid_spec.cell_size_xy, grid_spec.cell_size_z
    vxy, vz = grid_spec
    return float(vxy), float(vz)


class ObstacleCostCache:
    """Per-cell obstacle costs shared by all heading layers of a cell.

    Entries are computed on first use and dropped when a field from a new
    grid revision is presented.
    """

    def __init__(self, params: ObstacleCostParams):
        self.params = params
        self.evaluations = 0
        self._key = None
        self._costs: np.ndarray | None = None
        self._known: np.ndarray | None = None

    def _sync(self, field: DistanceField) -> None:
        key = (field.source_revision, id(field.distance))
        if key != self._key:
            self._key = key
            self._costs = np.zeros(field.dims)
            self._known = np.zeros(field.dims, dtype=bool)

    def cost(self, field: DistanceField, cell) -> float:
        self._sync(field)
        cell = tuple(int(i) for i in cell)
        if not self._known[cell]:
            self._costs[cell] = obstacle_cost(float(field.distance[cell]), self.params)
            self._known[cell] = True
            self.evaluations += 1
        return float(self._costs[cell])

    def costs(self, field: DistanceField) -> np.ndarray:
        """All cell costs, evaluating only cells not yet cached."""
        self._sync(field)
        todo = ~self._known
        n = int(todo.sum())
        if n:
            self._costs[todo] = obstacle_cost(field.distance[todo], self.params)
            self._known[todo] = True
            self.evaluations += n
        return self._costs


# ---------------------------------------------------------------------------
# edges and heuristic


def successors(node: SearchNode, grid: OccupancyGrid, field: DistanceField | None = None,
               params: ObstacleCostParams | None = None, tables: EdgeTables | None = None,
               constrained: bool = True) -> list[tuple[SearchNode, Edge]]:
    """Admissible lattice moves from ``node``.

    Cells outside the grid, occupied cells, and (when a field is given)
    cells closer than ``d_min`` to an obstacle are not returned.
    """
    if not grid.in_bounds(node.cell):
        raise GridRangeError(f"node {node.cell} outside dims {grid.dims}")
    tables = tables or build_luts(SensorModel(), grid, constrained)
    params = params or ObstacleCostParams()
    out = []
    for e in tables.allowed_edges(node.heading):
        cell = tuple(int(c + o) for c, o in zip(node.cell, tables.offsets[e]))
        if not grid.in_bounds(cell) or grid.occupied[cell]:
            continue
        if field is not None and field.distance[cell] < params.d_min:
            continue
        h = int(tables.headings[e])
        nh = node.heading if h == WILDCARD else h
        out.append((SearchNode(cell, nh), Edge(tuple(int(o) for o in tables.offsets[e]), h,
                                               float(tables.lengths[e]))))
    return out


def edge_cost(edge: Edge, field: DistanceField, target_cell, obstacle_weight: float,
              params: ObstacleCostParams) -> float:
    d = float(field.distance[tuple(int(i) for i in target_cell)])
    return edge.length * (1.0 + obstacle_weight * obstacle_cost(d, params))


def heuristic(d, apex_angle: float, cell_size_xy: float, cell_size_z: float):
    """Lower bound on the lattice path length for displacement ``d`` (metres).

    Inside the visibility cone this is the Euclidean distance; the altitude
    that cannot be reached on a straight line is charged at the cost of
    diagonal climbing edges.  Accepts a single 3-vector or an (n, 3) array.
    """
    d = np.asarray(d, dtype=float)
    planar = np.hypot(d[..., 0], d[..., 1])
    dz = np.abs(d[..., 2])
    z_e = np.minimum(dz, math.tan(apex_angle / 2) * planar)
    z_z = np.maximum(0.0, dz - z_e) / cell_size_z * math.hypot(cell_size_xy, cell_size_z)
    h = np.sqrt(planar**2 + z_e**2) + z_z
    return float(h) if h.ndim == 0 else h


def lattice_apex_angle(grid: OccupancyGrid) -> float:
    """Apex angle whose half-angle slope equals the grid's diagonal climb."""
    return 2.0 * math.atan2(grid.cell_size_z, grid.cell_size_xy)


# ---------------------------------------------------------------------------
# search


def plan(config: PlanConfig, grid: OccupancyGrid, field: DistanceField,
         initial_heading: int | None = None, cache: ObstacleCostCache | None = None) -> PlannedPath:
    """A* from ``config.start`` to ``config.goal`` (both snapped to cells).

    The start is seeded with every heading at zero cost unless
    ``initial_heading`` fixes the current flight direction; the goal
    accepts any heading.  Ties on f are broken toward larger g.
    """
    params = config.cost_params
    if field.dims != grid.dims:
        raise ValueError("distance field does not match grid")
    sensor = config.sensor
    if config.constrained and grid.cell_size_z > sensor.max_slope * grid.cell_size_xy * (1 + 1e-9):
        raise ValueError("grid cells are steeper than the sensor apex angle allows")
    start = grid.cell_of(config.start[:3])
    goal = grid.cell_of(config.goal[:3])
    for name, cell in (("start", start), ("goal", goal)):
        if grid.occupied[cell] or field.distance[cell] < params.d_min:
            raise InfeasibleEndpointError(
                f"{name} cell {cell} is within {params.d_min} m of an obstacle")

    tables = build_luts(sensor, grid, config.constrained)
    nx, ny, nz = grid.dims
    # padded layout: a one-cell blocked border removes bounds checks
    px, py, pz = nx + 2, ny + 2, nz + 2
    sy, sz = py * pz, pz
    ncell = px * py * pz

    blocked_grid = grid.occupied | (field.distance < params.d_min)
    blocked = np.ones((px, py, pz), dtype=bool)
    blocked[1:-1, 1:-1, 1:-1] = blocked_grid
    cache = cache or ObstacleCostCache(params)
    factor = np.ones((px, py, pz))
    factor[1:-1, 1:-1, 1:-1] = 1.0 + config.obstacle_weight * cache.costs(field)

    gi = np.array(goal)
    idx = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1)
    disp = (idx - gi) * grid.cell_sizes
    if config.heuristic == "fov":
        hval = heuristic(disp.reshape(-1, 3), lattice_apex_angle(grid), grid.cell_size_xy,
                         grid.cell_size_z).reshape(grid.dims)
    elif config.heuristic == "euclidean":
        hval = np.linalg.norm(disp, axis=-1)
    else:
        hval = np.zeros(grid.dims)
    hpad = np.zeros((px, py, pz))
    hpad[1:-1, 1:-1, 1:-1] = hval

    blocked_l = blocked.ravel().tolist()
    factor_l = factor.ravel().tolist()
    h_l = hpad.ravel().tolist()
    offs = [int(o[0]) * sy + int(o[1]) * sz + int(o[2]) for o in tables.offsets]
    lens = tables.lengths.tolist()
    ehead = tables.headings.tolist()
    moves = []
    for h in range(N_HEADINGS + 1):
        row = []
        for e in tables.allowed_edges(h):
            nh = ehead[e]
            row.append((offs[e], lens[e], nh))
        moves.append(row)

    def flat(c):
        return (c[0] + 1) * sy + (c[1] + 1) * sz + (c[2] + 1)

    s_cell, g_cell = flat(start), flat(goal)
    h0 = WILDCARD if initial_heading is None else int(initial_heading)
    n_states = ncell * 9
    gbest = [math.inf] * n_states
    parent = {}
    closed = bytearray(n_states)
    s0 = s_cell * 9 + h0
    gbest[s0] = 0.0
    heap = [(h_l[s_cell], -0.0, s0)]
    push, pop = heapq.heappush, heapq.heappop
    expansions = 0
    found = -1
    while heap:
        _, neg_g, s = pop(heap)
        if closed[s]:
            continue
        closed[s] = 1
        expansions += 1
        c, hd = divmod(s, 9)
        if c == g_cell:
            found = s
            break
        gc = -neg_g
        for off, length, eh in moves[hd]:
            nc = c + off
            if blocked_l[nc]:
                continue
            ns = nc * 9 + (hd if eh == WILDCARD else eh)
            if closed[ns]:
                continue
            ng = gc + length * factor_l[nc]
            if ng < gbest[ns]:
                gbest[ns] = ng
                parent[ns] = s
                push(heap, (ng + h_l[nc], -ng, ns))
    if found < 0:
        raise NoPathError(f"no path from {start} to {goal} ({expansions} expansions)")

    states = [found]
    while states[-1] in parent:
        states.append(parent[states[-1]])
    states.reverse()
    cells = []
    for s in states:
        c = s // 9
        ix, rem = divmod(c, sy)
        iy, iz = divmod(rem, sz)
        cells.append((ix - 1, iy - 1, iz - 1))
    centers = np.array([grid.center(c) for c in cells])
    waypoints = np.zeros((len(cells), 4))
    waypoints[:, :3] = centers
    waypoints[:, 3] = config.start[3]
    headings = []
    for s in states[1:]:
        hd = s % 9
        headings.append(-1 if hd == WILDCARD else hd)
    path = PlannedPath(waypoints, gbest[found], expansions, headings)
    return assign_yaw(path, sensor, config.start[3])


# ---------------------------------------------------------------------------
# yaw


def wrap_angle(a):
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi


def segment_azimuths(positions: np.ndarray) -> np.ndarray:
    """Planar azimuth of each segment; segments without planar motion inherit a neighbour's."""
    d = np.diff(positions, axis=0)
    planar = np.hypot(d[:, 0], d[:, 1])
    az = np.arctan2(d[:, 1], d[:, 0])
    moving = planar > 1e-12
    if not moving.any():
        return np.zeros(len(d))
    last = az[np.flatnonzero(moving)[0]]
    for i in range(len(d)):
        if moving[i]:
            last = az[i]
        else:
            az[i] = last
    return az


def assign_yaw(path: PlannedPath, sensor: SensorModel, start_yaw: float | None = None) -> PlannedPath:
    """Fill waypoint yaw according to the sensor mounting.

    Omnidirectional sensors keep the start yaw.  Front-facing sensors turn
    toward the next segment while flying the current one, so the yaw meets
    the new flight direction at each waypoint; turns the sensor cannot
    cover get an in-place rotation waypoint instead.
    """
    wp = path.waypoints.copy()
    if start_yaw is None:
        start_yaw = float(wp[0, 3])
    if sensor.mode == OMNIDIRECTIONAL or len(wp) < 2:
        wp[:, 3] = start_yaw
        return replace(path, waypoints=wp, headings=list(path.headings))

    pos = wp[:, :3]
    seg = np.diff(pos, axis=0)
    translating = np.linalg.norm(seg, axis=1) > 1e-12
    az = segment_azimuths(pos)
    limit = min(sensor.horizontal_fov / 2, math.pi / 4) + 1e-9
    old_head = list(path.headings) if len(path.headings) == len(seg) else [-1] * len(seg)

    yaw = float(start_yaw)
    out = [np.r_[pos[0], yaw]]
    heads: list[int] = []
    for k in range(len(seg)):
        if not translating[k]:
            continue
        if abs(float(wrap_angle(az[k] - yaw))) > limit:
            yaw = yaw + float(wrap_angle(az[k] - yaw))
            out.append(np.r_[pos[k], yaw])
            heads.append(-1)
        nxt = next((j for j in range(k + 1, len(seg)) if translating[j]), None)
        target = az[k]
        if nxt is not None and abs(float(wrap_angle(az[nxt] - az[k]))) <= limit:
            target = az[nxt]
        yaw = yaw + float(wrap_angle(target - yaw))
        out.append(np.r_[pos[k + 1], yaw])
        heads.append(old_head[k])
    return replace(path, waypoints=np.array(out), headings=heads)


# ---------------------------------------------------------------------------
# path files


def format_path(path: PlannedPath) -> str:
    lines = [
        "# fovplan path",
        f"# cost={path.cost!r} expansions={path.expansions} waypoints={len(path)}",
        "# x y z yaw heading",
    ]
    heads = [-1] + (list(path.headings) if len(path.headings) == len(path) - 1 else [-1] * (len(path) - 1))
    for row, h in zip(path.waypoints, heads):
        lines.append(" ".join(f"{v:.17g}" for v in row) + f" {h}")
    return "\n".join(lines) + "\n"


def parse_path(text: str) -> PlannedPath:
    cost, expansions = 0.0, 0
    rows, heads = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("cost="):
                    cost = float(tok[5:])
                elif tok.startswith("expansions="):
                    expansions = int(tok[11:])
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        rows.append([float(p) for p in parts[:4]])
        heads.append(int(parts[4]))
    if not rows:
        raise ValueError("path file has no waypoints")
    return PlannedPath(np.array(rows), cost, expansions, heads[1:])


def write_path(path: PlannedPath, dest) -> None:
    Path(dest).write_text(format_path(path))


def read_path(src) -> PlannedPath:
    return parse_path(Path(src).read_text())
