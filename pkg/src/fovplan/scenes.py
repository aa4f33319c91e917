"""Preset scenes used by the CLI, the experiment scripts and the tests.

All presets use 1 m horizontal cells and vertical cells sized for a 30
degree apex angle unless another angle is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fovplan.map import OccupancyGrid, scene_document, serialize_scene

Box = tuple[tuple[float, float, float], tuple[float, float, float]]


@dataclass
class Scene:
    name: str
    grid: OccupancyGrid
    boxes: list[Box] = field(default_factory=list)
    start: tuple[float, float, float, float] | None = None
    goal: tuple[float, float, float, float] | None = None

    def document(self) -> dict:
        return scene_document(self.grid, self.boxes, start=self.start, goal=self.goal, name=self.name)

    def to_yaml(self) -> str:
        return serialize_scene(self.grid, self.boxes, start=self.start, goal=self.goal, name=self.name)


def _grid(dims, height: float, apex_deg: float) -> OccupancyGrid:
    apex = math.radians(apex_deg)
    vz = math.tan(apex / 2)
    nz = int(math.ceil(height / vz))
    return OccupancyGrid.empty((0.0, 0.0, 0.0), 1.0, (dims[0], dims[1], nz), cell_size_z=vz)


def _z(grid: OccupancyGrid, layer: int) -> float:
    return float(grid.origin[2] + (layer + 0.5) * grid.cell_size_z)


def _scene(name, grid, boxes, start, goal) -> Scene:
    boxes = [(tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in boxes]
    return Scene(name, grid.with_boxes(boxes) if boxes else grid, boxes,
                 tuple(map(float, start)), tuple(map(float, goal)))


def ascent(height: float = 7.0, apex_deg: float = 30.0, size: int = 20) -> Scene:
    """Open space; the goal sits straight above the start."""
    grid = _grid((size, size), height + 3.0, apex_deg)
    layers = int(round(height / grid.cell_size_z))
    c = size / 2 + 0.5
    return _scene("ascent", grid, [], (c, c, _z(grid, 0), 0.0), (c, c, _z(grid, layers), 0.0))


def empty(apex_deg: float = 30.0, size: tuple[int, int] = (40, 40), height: float = 5.0) -> Scene:
    grid = _grid(size, height, apex_deg)
    z = _z(grid, 3)
    return _scene("empty", grid, [], (2.5, 2.5, z, 0.0), (size[0] - 2.5, size[1] - 2.5, z, 0.0))


def wall(height: float = 4.0, apex_deg: float = 30.0) -> Scene:
    """A wall spanning the whole grid width between start and goal."""
    grid = _grid((60, 20), 12.0, apex_deg)
    boxes = [((29.0, 0.0, 0.0), (31.0, 20.0, height))]
    z = _z(grid, 1)
    return _scene("wall", grid, boxes, (5.5, 10.5, z, 0.0), (54.5, 10.5, z, 0.0))


def wall_with_opening(height: float = 4.0, apex_deg: float = 30.0, wall_height: float = 10.0,
                      width: float = 5.0, gap: float = 3.0) -> Scene:
    """A wall with a rectangular window centred at ``height`` metres on the flight line.

    Box faces must not pass through cell centers, so the window is centred
    at y = 10.5 and the default width puts its sides on cell boundaries.
    """
    grid = _grid((60, 20), 12.0, apex_deg)
    y0, y1 = 10.5 - width / 2, 10.5 + width / 2
    z0, z1 = height - gap / 2, height + gap / 2
    boxes = [
        ((29.0, 0.0, 0.0), (31.0, y0, wall_height)),
        ((29.0, y1, 0.0), (31.0, 20.0, wall_height)),
        ((29.0, y0, 0.0), (31.0, y1, z0)),
        ((29.0, y0, z1), (31.0, y1, wall_height)),
    ]
    z = _z(grid, 1)
    return _scene("wall-with-opening", grid, boxes, (5.5, 10.5, z, 0.0), (54.5, 10.5, z, 0.0))


def building(height: float = 4.0, apex_deg: float = 30.0) -> Scene:
    """A single block of uniform height between start and goal."""
    grid = _grid((50, 30), 10.0, apex_deg)
    boxes = [((20.0, 5.0, 0.0), (30.0, 25.0, height))]
    z = _z(grid, 1)
    return _scene("building", grid, boxes, (4.5, 15.5, z, 0.0), (45.5, 15.5, z, 0.0))


VILLAGE_BOXES: list[Box] = [
    # L-shaped block close to the start
    ((8.0, 8.0, 0.0), (12.0, 32.0, 6.0)),
    ((8.0, 28.0, 0.0), (20.0, 32.0, 6.0)),
    # houses
    ((22.0, 4.0, 0.0), (28.0, 12.0, 4.0)),
    ((22.0, 16.0, 0.0), (28.0, 24.0, 5.0)),
    ((22.0, 28.0, 0.0), (28.0, 36.0, 3.5)),
    ((34.0, 6.0, 0.0), (40.0, 18.0, 6.0)),
    ((34.0, 22.0, 0.0), (40.0, 34.0, 4.5)),
    ((46.0, 12.0, 0.0), (52.0, 28.0, 5.0)),
]


def village(apex_deg: float = 30.0) -> Scene:
    """Houses of mixed height with an L-shaped block near the start; the goal is elevated."""
    grid = _grid((60, 40), 12.0, apex_deg)
    start = (3.5, 20.5, _z(grid, 1), 0.0)
    goal = (56.5, 20.5, _z(grid, 30), 0.0)
    return _scene("village", grid, VILLAGE_BOXES, start, goal)


def corridor(apex_deg: float = 30.0, length: int = 50) -> Scene:
    """Open field used for the hidden-obstacle replanning trials."""
    grid = _grid((length, 21), 8.0, apex_deg)
    z = _z(grid, 7)
    return _scene("corridor", grid, [], (3.5, 10.5, z, 0.0), (length - 3.5, 10.5, z, 0.0))


PRESETS = {
    "empty": empty,
    "ascent": ascent,
    "wall": wall,
    "wall-with-opening": wall_with_opening,
    "building": building,
    "village": village,
    "corridor": corridor,
}


def make_scene(name: str, **params) -> Scene:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


def hidden_cube(rng: np.random.Generator, start, goal, size: float = 4.0, radius: float = 1.0,
                along=(0.45, 0.75)) -> Box:
    """Axis-aligned cube whose centre lies within ``radius`` of the start-goal line.

    The centre is placed at a uniform fraction ``along`` of the segment and
    offset perpendicular to it by a uniform point in the disc.
    """
    s = np.asarray(start, dtype=float)[:3]
    g = np.asarray(goal, dtype=float)[:3]
    u = (g - s) / np.linalg.norm(g - s)
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    t = rng.uniform(*along)
    r = radius * math.sqrt(rng.uniform())
    a = rng.uniform(0, 2 * math.pi)
    c = s + t * (g - s) + r * (math.cos(a) * e1 + math.sin(a) * e2)
    h = size / 2
    return (tuple(float(v) for v in c - h), tuple(float(v) for v in c + h))
