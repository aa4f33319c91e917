"""Independent reference implementations used by the tests.

Nothing here imports the planner's search, lookup tables or the
optimizer's operators; only grid geometry is shared.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

DIRS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def centers(grid) -> np.ndarray:
    idx = np.argwhere(np.ones(grid.dims, dtype=bool))
    return grid.origin + (idx + 0.5) * grid.cell_sizes


def brute_force_distance(grid) -> np.ndarray:
    """Nearest occupied center distance for every cell by an all-pairs scan."""
    c = centers(grid)
    occ = c[grid.occupied.ravel()]
    if not len(occ):
        return np.full(grid.dims, np.linalg.norm(grid.cell_sizes * np.array(grid.dims)))
    d2 = ((c[:, None, :] - occ[None, :, :]) ** 2).sum(-1)
    return np.sqrt(d2.min(axis=1)).reshape(grid.dims)


def brute_force_box_count(grid, lo, hi) -> int:
    c = centers(grid)
    inside = np.all((c > np.asarray(lo)) & (c < np.asarray(hi)), axis=1)
    return int(inside.sum())


def piecewise_cost(d: float, d_min=1.0, d_safe=3.0, o_far=1.0, o_close=10.0) -> float:
    if d >= d_safe:
        return 0.0
    if d >= d_min:
        return o_far * (d_safe - d)
    return o_far * (d_safe - d_min) + o_close * (d_min - d)


def heading_diff(a: int, b: int) -> int:
    d = abs(a - b) % 8
    return min(d, 8 - d)


def lattice_graph(grid, distance: np.ndarray, weight=1.0, d_min=1.0, constrained=True):
    """Sparse graph over (cell, heading) states, heading 8 being the start wildcard.

    Edge weight is metric length times (1 + weight * cost(distance at target)).
    Blocked cells (occupied or closer than d_min) carry no edges.
    """
    nx, ny, nz = grid.dims
    vxy, vz = grid.cell_size_xy, grid.cell_size_z
    blocked = grid.occupied | (distance < d_min)
    moves = []
    for h, (dx, dy) in enumerate(DIRS):
        for dz in (-1, 0, 1):
            moves.append((dx, dy, dz, h))
    if not constrained:
        moves += [(0, 0, -1, None), (0, 0, 1, None)]

    def sid(i, j, k, h):
        return ((i * ny + j) * nz + k) * 9 + h

    rows, cols, vals = [], [], []
    for i, j, k in itertools.product(range(nx), range(ny), range(nz)):
        if blocked[i, j, k]:
            continue
        for h in range(9):
            for dx, dy, dz, eh in moves:
                if h != 8 and eh is not None and heading_diff(h, eh) > 1:
                    continue
                a, b, c = i + dx, j + dy, k + dz
                if not (0 <= a < nx and 0 <= b < ny and 0 <= c < nz) or blocked[a, b, c]:
                    continue
                length = math.sqrt((dx * vxy) ** 2 + (dy * vxy) ** 2 + (dz * vz) ** 2)
                w = length * (1.0 + weight * piecewise_cost(float(distance[a, b, c]), d_min))
                nh = h if eh is None else eh
                rows.append(sid(i, j, k, h))
                cols.append(sid(a, b, c, nh))
                vals.append(w)
    n = nx * ny * nz * 9
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)), sid


def costs_to_goal(grid, distance, goal, **kw) -> np.ndarray:
    """Exact cost from every (cell, heading) state to any heading at ``goal``.

    Returns an array of shape dims + (9,); unreachable states are inf.
    """
    g, sid = lattice_graph(grid, distance, **kw)
    targets = [sid(*goal, h) for h in range(9)]
    d = csgraph.dijkstra(g.T.tocsr(), directed=True, indices=targets, min_only=True)
    return d.reshape(*grid.dims, 9)


def cost_from_start(grid, distance, start, goal, **kw) -> float:
    g, sid = lattice_graph(grid, distance, **kw)
    d = csgraph.dijkstra(g, directed=True, indices=sid(*start, 8))
    return float(min(d[sid(*goal, h)] for h in range(9)))


def dense_control_matrix(n: int, dt: float) -> np.ndarray:
    k = np.zeros((n - 2, n))
    for r in range(n - 2):
        k[r, r], k[r, r + 1], k[r, r + 2] = 1.0, -2.0, 1.0
    k /= dt**2
    return k.T @ k


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def random_grid(rng, dims, occupancy, apex=math.radians(30.0)):
    from fovplan.map import OccupancyGrid

    grid = OccupancyGrid.empty((0.0, 0.0, 0.0), 1.0, dims, apex_angle=apex)
    return grid.with_occupied(rng.random(dims) < occupancy)
