"""Occupancy voxel grid, Euclidean distance field and obstacle costs.

The grid is anisotropic: horizontal cells have edge length ``cell_size_xy``
and vertical cells ``cell_size_z``.  For a sensor with vertical apex angle
``phi`` the vertical size is ``tan(phi / 2) * cell_size_xy`` so that a
diagonal lattice step climbs exactly at the steepest visible slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml
from scipy import ndimage

AXES = ("x", "y", "z")


class SceneError(ValueError):
    """Malformed or invalid scene description."""


class GridRangeError(ValueError):
    """Query outside the grid bounds."""


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: np.ndarray
    cell_size_xy: float
    cell_size_z: float
    occupied: np.ndarray
    revision: int = 0

    def __post_init__(self):
        if not (self.cell_size_xy > 0 and self.cell_size_z > 0):
            raise SceneError("cell sizes must be positive")
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise SceneError(f"occupancy must be a non-empty 3D array, got shape {occ.shape}")
        occ = occ.copy()
        occ.flags.writeable = False
        origin = np.array(self.origin, dtype=float).reshape(3)
        origin.flags.writeable = False
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size_xy", float(self.cell_size_xy))
        object.__setattr__(self, "cell_size_z", float(self.cell_size_z))

    @classmethod
    def empty(cls, origin, cell_size_xy: float, dims, cell_size_z: float | None = None,
              apex_angle: float | None = None) -> "OccupancyGrid":
        """Free grid; give either ``cell_size_z`` or the sensor ``apex_angle``."""
        if cell_size_z is None:
            if apex_angle is None:
                raise SceneError("need cell_size_z or apex_angle")
            cell_size_z = cell_size_z_for(apex_angle, cell_size_xy)
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise SceneError(f"dims must be three positive integers, got {dims}")
        return cls(origin, cell_size_xy, cell_size_z, np.zeros(dims, dtype=bool))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.occupied.shape)

    @property
    def cell_sizes(self) -> np.ndarray:
        return np.array([self.cell_size_xy, self.cell_size_xy, self.cell_size_z])

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.cell_sizes * np.array(self.dims)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.cell_sizes[axis]

    def center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.cell_sizes

    def in_bounds(self, idx) -> bool:
        return all(0 <= int(i) < n for i, n in zip(idx, self.dims))

    def is_occupied(self, idx) -> bool:
        if len(idx) != 3 or not self.in_bounds(idx):
            raise GridRangeError(f"cell index {tuple(idx)} outside dims {self.dims}")
        return bool(self.occupied[tuple(int(i) for i in idx)])

    def cell_of(self, point) -> tuple[int, int, int]:
        """Index of the cell containing ``point``; upper faces map to the last cell."""
        p = np.asarray(point, dtype=float)
        _check_bounds(self.origin, self.upper, p)
        idx = np.floor((p - self.origin) / self.cell_sizes).astype(int)
        idx = np.minimum(idx, np.array(self.dims) - 1)
        return tuple(int(i) for i in idx)

    def box_mask(self, lo, hi) -> np.ndarray:
        """Cells whose centers lie strictly inside the box ``[lo, hi]``."""
        inside = [
            (self.axis_centers(a) > lo[a]) & (self.axis_centers(a) < hi[a]) for a in range(3)
        ]
        return inside[0][:, None, None] & inside[1][None, :, None] & inside[2][None, None, :]

    def with_occupied(self, mask: np.ndarray) -> "OccupancyGrid":
        """New grid revision with ``mask`` cells added to the occupancy."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.dims:
            raise GridRangeError(f"mask shape {mask.shape} does not match dims {self.dims}")
        return OccupancyGrid(self.origin, self.cell_size_xy, self.cell_size_z,
                             self.occupied | mask, self.revision + 1)

    def with_boxes(self, boxes: Sequence[tuple[Sequence[float], Sequence[float]]]) -> "OccupancyGrid":
        mask = np.zeros(self.dims, dtype=bool)
        for lo, hi in boxes:
            mask |= self.box_mask(lo, hi)
        return self.with_occupied(mask)

    def same_geometry(self, other: "OccupancyGrid") -> bool:
        return (
            self.dims == other.dims
            and self.cell_size_xy == other.cell_size_xy
            and self.cell_size_z == other.cell_size_z
            and np.array_equal(self.origin, other.origin)
        )

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.occupied, other.occupied)

    __hash__ = None


def cell_size_z_for(apex_angle: float, cell_size_xy: float) -> float:
    if not 0.0 < apex_angle <= math.pi / 2 + 1e-12:
        raise SceneError(f"apex angle must lie in (0, pi/2], got {apex_angle}")
    return math.tan(apex_angle / 2.0) * cell_size_xy


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Metric distance from every cell center to the nearest occupied center."""

    origin: np.ndarray
    cell_sizes: np.ndarray
    distance: np.ndarray
    source_revision: int
    sentinel: float

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.distance.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.cell_sizes * np.array(self.dims)


@dataclass(frozen=True)
class ObstacleCostParams:
    d_min: float = 1.0
    d_safe: float = 3.0
    o_far: float = 1.0
    o_close: float = 10.0

    def __post_init__(self):
        if not 0 < self.d_min < self.d_safe:
            raise ValueError(f"need 0 < d_min < d_safe, got {self.d_min}, {self.d_safe}")
        if not 0 < self.o_far < self.o_close:
            raise ValueError(f"need 0 < o_far < o_close, got {self.o_far}, {self.o_close}")


def compute_distance_field(grid: OccupancyGrid) -> DistanceField:
    sizes = grid.cell_sizes
    sentinel = float(np.linalg.norm(sizes * np.array(grid.dims)))
    if not grid.occupied.any():
        dist = np.full(grid.dims, sentinel)
    else:
        # sampling makes the transform operate on metric squared distances per axis
        dist = ndimage.distance_transform_edt(~grid.occupied, sampling=tuple(sizes))
        dist = np.asarray(dist, dtype=float)
    dist.flags.writeable = False
    return DistanceField(grid.origin.copy(), sizes, dist, grid.revision, sentinel)


def obstacle_cost(distance, params: ObstacleCostParams):
    """Piecewise-linear cost, zero beyond ``d_safe`` and steepest inside ``d_min``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise ValueError("obstacle_cost requires a nonnegative distance")
    far = params.o_far * (params.d_safe - d)
    close = params.o_far * (params.d_safe - params.d_min) + params.o_close * (params.d_min - d)
    cost = np.where(d >= params.d_safe, 0.0, np.where(d >= params.d_min, far, close))
    return float(cost) if cost.ndim == 0 else cost


def obstacle_cost_slope(distance, params: ObstacleCostParams):
    """d(cost)/d(distance); one-sided (right) value at the breakpoints."""
    d = np.asarray(distance, dtype=float)
    slope = np.where(d >= params.d_safe, 0.0, np.where(d >= params.d_min, -params.o_far, -params.o_close))
    return float(slope) if slope.ndim == 0 else slope


def _check_bounds(lo: np.ndarray, hi: np.ndarray, p: np.ndarray) -> None:
    for a in range(3):
        if not lo[a] <= p[a] <= hi[a]:
            raise GridRangeError(
                f"{AXES[a]} = {p[a]:.6g} outside grid range [{lo[a]:.6g}, {hi[a]:.6g}]"
            )


def _trilinear(field: DistanceField, points: np.ndarray):
    """Trilinear interpolation; points are clamped into the grid."""
    dims = np.array(field.dims)
    u = (points - field.origin) / field.cell_sizes - 0.5
    u = np.clip(u, 0.0, dims - 1)
    i0 = np.minimum(np.floor(u).astype(int), np.maximum(dims - 2, 0))
    i1 = np.minimum(i0 + 1, dims - 1)
    f = u - i0
    d = field.distance
    out = np.zeros(len(points))
    for cx in (0, 1):
        wx = f[:, 0] if cx else 1.0 - f[:, 0]
        ix = i1[:, 0] if cx else i0[:, 0]
        for cy in (0, 1):
            wy = f[:, 1] if cy else 1.0 - f[:, 1]
            iy = i1[:, 1] if cy else i0[:, 1]
            for cz in (0, 1):
                wz = f[:, 2] if cz else 1.0 - f[:, 2]
                iz = i1[:, 2] if cz else i0[:, 2]
                out += wx * wy * wz * d[ix, iy, iz]
    return out


def query_distance(field: DistanceField, point) -> float:
    p = np.asarray(point, dtype=float).reshape(3)
    _check_bounds(field.origin, field.upper, p)
    return float(_trilinear(field, p[None, :])[0])


def query_distances(field: DistanceField, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized query; out-of-bounds points are clamped and flagged."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    outside = np.any((pts < field.origin) | (pts > field.upper), axis=1)
    return _trilinear(field, pts), outside


def distance_gradient(field: DistanceField, points, step=None) -> np.ndarray:
    """Central-difference gradient of the interpolated distance.

    ``step`` defaults to half a cell per axis, which smooths over the face
    discontinuities of the trilinear interpolant.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = field.cell_sizes / 2.0 if step is None else np.broadcast_to(np.asarray(step, float), (3,))
    grad = np.empty_like(pts)
    for a in range(3):
        e = np.zeros(3)
        e[a] = h[a]
        grad[:, a] = (_trilinear(field, pts + e) - _trilinear(field, pts - e)) / (2 * h[a])
    return grad


# ---------------------------------------------------------------------------
# scene files


def _node_lines(node, path: str, out: dict[str, int]) -> None:
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _node_lines(v, f"{path}.{k.value}" if path else str(k.value), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _node_lines(v, f"{path}[{i}]", out)


class _Doc:
    """Scene mapping plus source line numbers for error messages."""

    def __init__(self, data: Mapping, lines: dict[str, int] | None = None):
        self.data = data
        self.lines = lines or {}

    def fail(self, path: str, msg: str):
        line = self.lines.get(path)
        where = f"line {line}, " if line else ""
        raise SceneError(f"{where}field '{path}': {msg}")

    def vector(self, value, path: str, n: int) -> list[float]:
        if not isinstance(value, (list, tuple)) or len(value) != n:
            self.fail(path, f"expected a list of {n} numbers")
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                self.fail(f"{path}[{i}]", f"expected a finite number, got {v!r}")
            out.append(float(v))
        return out

    def number(self, value, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
        return float(value)


def parse_scene_text(text: str) -> _Doc:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise SceneError(f"{where}{getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(data, dict):
        raise SceneError("scene must be a mapping with 'grid' and 'boxes' keys")
    lines: dict[str, int] = {}
    if node is not None:
        _node_lines(node, "", lines)
    return _Doc(data, lines)


def load_scene(scene) -> OccupancyGrid:
    """Build a grid from a scene mapping, YAML text, or a path to a YAML file."""
    doc = _as_doc(scene)
    return _grid_from_doc(doc)


def scene_extras(scene) -> dict[str, Any]:
    """Optional start/goal/name entries of a scene."""
    doc = _as_doc(scene)
    out: dict[str, Any] = {}
    for key in ("start", "goal"):
        if key in doc.data:
            out[key] = doc.vector(doc.data[key], key, 4)
    if "name" in doc.data:
        out["name"] = str(doc.data["name"])
    return out


def _as_doc(scene) -> _Doc:
    if isinstance(scene, _Doc):
        return scene
    if isinstance(scene, Mapping):
        return _Doc(scene)
    if isinstance(scene, Path) or (isinstance(scene, str) and "\n" not in scene and scene.endswith((".yaml", ".yml"))):
        return parse_scene_text(Path(scene).read_text())
    if isinstance(scene, str):
        return parse_scene_text(scene)
    raise SceneError(f"unsupported scene description type {type(scene).__name__}")


def _grid_from_doc(doc: _Doc) -> OccupancyGrid:
    g = doc.data.get("grid")
    if not isinstance(g, Mapping):
        doc.fail("grid", "missing grid specification")
    origin = doc.vector(g.get("origin", [0.0, 0.0, 0.0]), "grid.origin", 3)
    if "cell_size_xy" not in g:
        doc.fail("grid.cell_size_xy", "missing")
    vxy = doc.number(g["cell_size_xy"], "grid.cell_size_xy")
    if vxy <= 0:
        doc.fail("grid.cell_size_xy", "must be positive")
    if "cell_size_z" in g:
        vz = doc.number(g["cell_size_z"], "grid.cell_size_z")
        if vz <= 0:
            doc.fail("grid.cell_size_z", "must be positive")
    elif "apex_angle" in g:
        phi = doc.number(g["apex_angle"], "grid.apex_angle")
        if not 0 < phi <= math.pi / 2:
            doc.fail("grid.apex_angle", "must lie in (0, pi/2] radians")
        vz = cell_size_z_for(phi, vxy)
    else:
        doc.fail("grid", "need cell_size_z or apex_angle")
    dims_raw = g.get("dims")
    if not isinstance(dims_raw, (list, tuple)) or len(dims_raw) != 3:
        doc.fail("grid.dims", "expected three integers")
    dims = []
    for i, d in enumerate(dims_raw):
        if isinstance(d, bool) or not isinstance(d, int):
            doc.fail(f"grid.dims[{i}]", f"expected an integer, got {d!r}")
        if d <= 0:
            doc.fail(f"grid.dims[{i}]", "must be positive")
        dims.append(d)
    grid = OccupancyGrid(origin, vxy, vz, np.zeros(dims, dtype=bool))

    boxes = doc.data.get("boxes", []) or []
    if not isinstance(boxes, list):
        doc.fail("boxes", "expected a list")
    parsed = []
    for i, b in enumerate(boxes):
        path = f"boxes[{i}]"
        if not isinstance(b, Mapping) or "min" not in b or "max" not in b:
            doc.fail(path, "expected a mapping with 'min' and 'max'")
        lo = doc.vector(b["min"], f"{path}.min", 3)
        hi = doc.vector(b["max"], f"{path}.max", 3)
        if any(l > h for l, h in zip(lo, hi)):
            doc.fail(path, "min must not exceed max")
        parsed.append((lo, hi))
    mask = np.zeros(grid.dims, dtype=bool)
    for lo, hi in parsed:
        mask |= grid.box_mask(lo, hi)
    return OccupancyGrid(origin, vxy, vz, mask, 0)


def scene_document(grid: OccupancyGrid, boxes=None, **extras) -> dict[str, Any]:
    """Scene mapping for ``grid``.

    Without explicit ``boxes`` the occupancy is written as runs of cells
    along x, which reloads to an identical grid.
    """
    doc: dict[str, Any] = {}
    if "name" in extras and extras["name"] is not None:
        doc["name"] = extras.pop("name")
    doc["grid"] = {
        "origin": [float(v) for v in grid.origin],
        "cell_size_xy": grid.cell_size_xy,
        "cell_size_z": grid.cell_size_z,
        "dims": list(grid.dims),
    }
    if boxes is None:
        boxes = _occupancy_runs(grid)
    doc["boxes"] = [{"min": [float(v) for v in lo], "max": [float(v) for v in hi]} for lo, hi in boxes]
    for key in ("start", "goal"):
        if extras.get(key) is not None:
            doc[key] = [float(v) for v in extras[key]]
    return doc


def _occupancy_runs(grid: OccupancyGrid):
    sizes = grid.cell_sizes
    boxes = []
    nx = grid.dims[0]
    for j, k in zip(*np.nonzero(grid.occupied.any(axis=0))):
        col = grid.occupied[:, j, k]
        i = 0
        while i < nx:
            if not col[i]:
                i += 1
                continue
            start = i
            while i < nx and col[i]:
                i += 1
            lo = grid.origin + sizes * np.array([start, j, k])
            hi = grid.origin + sizes * np.array([i, j + 1, k + 1])
            boxes.append((lo.tolist(), hi.tolist()))
    return boxes


def serialize_scene(grid: OccupancyGrid, boxes=None, **extras) -> str:
    doc = scene_document(grid, boxes, **extras)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def save_scene(path, grid: OccupancyGrid, boxes=None, **extras) -> None:
    Path(path).write_text(serialize_scene(grid, boxes, **extras))
