import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fovplan.map import (
    GridRangeError,
    ObstacleCostParams,
    OccupancyGrid,
    SceneError,
    compute_distance_field,
    load_scene,
    obstacle_cost,
    query_distance,
    query_distances,
    scene_extras,
    serialize_scene,
)
from oracles import brute_force_box_count, brute_force_distance, centers, piecewise_cost, random_grid

PARAMS = ObstacleCostParams()


def scene(dims=(4, 4, 4), boxes=(), vz=1.0):
    return {
        "grid": {"origin": [0, 0, 0], "cell_size_xy": 1.0, "cell_size_z": vz, "dims": list(dims)},
        "boxes": [{"min": list(lo), "max": list(hi)} for lo, hi in boxes],
    }


# --- grid -----------------------------------------------------------------


def test_vertical_cell_size_follows_apex_angle():
    for deg in (10.0, 30.0, 60.0, 90.0):
        g = OccupancyGrid.empty((0, 0, 0), 0.7, (2, 2, 2), apex_angle=math.radians(deg))
        assert g.cell_size_z == pytest.approx(math.tan(math.radians(deg) / 2) * 0.7, rel=1e-9)


def test_grid_requires_vertical_size_or_angle():
    with pytest.raises(SceneError):
        OccupancyGrid.empty((0, 0, 0), 1.0, (2, 2, 2))


def test_nonpositive_sizes_rejected():
    with pytest.raises(SceneError):
        OccupancyGrid.empty((0, 0, 0), 0.0, (2, 2, 2), cell_size_z=1.0)
    with pytest.raises(SceneError):
        OccupancyGrid.empty((0, 0, 0), 1.0, (2, 0, 2), cell_size_z=1.0)


def test_out_of_bounds_queries_rejected_not_wrapped():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (3, 3, 3), cell_size_z=1.0)
    with pytest.raises(GridRangeError):
        g.is_occupied((3, 0, 0))
    with pytest.raises(GridRangeError):
        g.is_occupied((-1, 0, 0))
    with pytest.raises(GridRangeError, match="y"):
        g.cell_of((1.0, 3.5, 1.0))


def test_revision_increases_on_every_mutation():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (3, 3, 3), cell_size_z=1.0)
    revs = [g.revision]
    for _ in range(3):
        g = g.with_occupied(np.zeros(g.dims, dtype=bool))
        revs.append(g.revision)
    assert all(b > a for a, b in zip(revs, revs[1:]))


def test_grid_is_immutable():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (3, 3, 3), cell_size_z=1.0)
    with pytest.raises(ValueError):
        g.occupied[0, 0, 0] = True


# --- scenes ---------------------------------------------------------------


def test_empty_scene_has_no_occupied_cells():
    assert load_scene(scene()).occupied.sum() == 0


def test_full_cover_occupies_all_cells():
    g = load_scene(scene(boxes=[((-1, -1, -1), (5, 5, 5))]))
    assert g.occupied.sum() == 64


def test_box_occupancy_matches_center_in_box_oracle():
    lo, hi = (1, 1, 0), (3, 3, 1)
    g = load_scene(scene(boxes=[(lo, hi)]))
    expected = brute_force_box_count(g, lo, hi)
    assert expected == 4  # frozen oracle value
    assert g.occupied.sum() == expected


def test_boxes_may_extend_beyond_grid():
    g = load_scene(scene(boxes=[((2, -10, -10), (50, 50, 50))]))
    assert g.occupied.sum() == 2 * 16


def test_scene_from_yaml_text_and_file(tmp_path):
    g = load_scene(scene(boxes=[((0, 0, 0), (2, 2, 2))]))
    text = serialize_scene(g, [((0, 0, 0), (2, 2, 2))], start=[0.5, 0.5, 3.5, 0.0])
    assert load_scene(text) == g
    f = tmp_path / "s.yaml"
    f.write_text(text)
    assert load_scene(f) == g
    assert scene_extras(f)["start"] == [0.5, 0.5, 3.5, 0.0]


def test_malformed_scene_reports_line_and_field():
    text = "grid:\n  cell_size_xy: 1.0\n  cell_size_z: 1.0\n  dims: [4, 4, x]\nboxes: []\n"
    with pytest.raises(SceneError, match=r"line 4.*grid\.dims\[2\]"):
        load_scene(text)


def test_scene_validation_errors():
    with pytest.raises(SceneError, match="dims"):
        load_scene(scene(dims=(4, 0, 4)))
    with pytest.raises(SceneError, match="cell_size_z"):
        load_scene(scene(vz=-1.0))
    with pytest.raises(SceneError):
        load_scene("grid: [unclosed")


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_scene_round_trip(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(v) for v in rng.integers(1, 7, 3))
    g = random_grid(rng, dims, rng.uniform(0, 0.5))
    g0 = OccupancyGrid(g.origin, g.cell_size_xy, g.cell_size_z, g.occupied, 0)
    again = load_scene(serialize_scene(g0))
    assert again == g0
    assert load_scene(serialize_scene(again)) == again


def test_scene_load_is_deterministic():
    s = scene(boxes=[((0.3, 0.2, 0.1), (2.7, 3.1, 2.2))])
    assert load_scene(s) == load_scene(s)


# --- distance field ------------------------------------------------------


def test_free_grid_distance_is_sentinel():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (4, 5, 6), cell_size_z=0.5)
    f = compute_distance_field(g)
    assert np.all(f.distance == f.sentinel)
    assert f.sentinel == pytest.approx(math.sqrt(16 + 25 + 9))


def test_single_occupied_cell_axis_distance():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (5, 2, 2), cell_size_z=1.0)
    mask = np.zeros(g.dims, dtype=bool)
    mask[0, 0, 0] = True
    f = compute_distance_field(g.with_occupied(mask))
    assert f.distance[3, 0, 0] == 3.0
    assert f.distance[0, 0, 0] == 0.0


def test_distance_field_matches_brute_force_on_random_grids():
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = random_grid(rng, (12, 12, 8), 0.05)
        f = compute_distance_field(g)
        assert np.max(np.abs(f.distance - brute_force_distance(g))) < 1e-9
        assert f.source_revision == g.revision


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_distance_field_matches_brute_force_anisotropic(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(v) for v in rng.integers(1, 17, 3))
    vz = float(rng.uniform(0.1, 2.0))
    g = OccupancyGrid.empty((0.5, -1.0, 2.0), 1.3, dims, cell_size_z=vz)
    g = g.with_occupied(rng.random(dims) < rng.uniform(0.001, 0.1))
    f = compute_distance_field(g)
    assert np.max(np.abs(f.distance - brute_force_distance(g))) < 1e-9
    assert np.all(f.distance[g.occupied] == 0.0)


def test_distance_field_is_lipschitz():
    rng = np.random.default_rng(3)
    g = random_grid(rng, (12, 12, 8), 0.05)
    f = compute_distance_field(g)
    c = centers(g)
    d = f.distance.ravel()
    i = rng.integers(0, len(c), 5000)
    j = rng.integers(0, len(c), 5000)
    assert np.all(np.abs(d[i] - d[j]) <= np.linalg.norm(c[i] - c[j], axis=1) + 1e-12)


# --- obstacle cost --------------------------------------------------------


def test_obstacle_cost_examples():
    assert obstacle_cost(3.0, PARAMS) == 0.0
    assert obstacle_cost(1.0, PARAMS) == pytest.approx(2.0)
    assert obstacle_cost(0.5, PARAMS) == pytest.approx(7.0)


def test_obstacle_cost_rejects_negative_distance():
    with pytest.raises(ValueError):
        obstacle_cost(-0.1, PARAMS)


def test_obstacle_cost_params_validation():
    with pytest.raises(ValueError):
        ObstacleCostParams(d_min=3.0, d_safe=1.0)
    with pytest.raises(ValueError):
        ObstacleCostParams(o_far=10.0, o_close=1.0)


def test_obstacle_cost_continuous_at_breakpoints():
    eps = 1e-6
    for d in (PARAMS.d_min, PARAMS.d_safe):
        jump = abs(obstacle_cost(d - eps, PARAMS) - obstacle_cost(d + eps, PARAMS))
        assert jump <= (PARAMS.o_close + PARAMS.o_far) * 2 * eps


@given(st.floats(0, 10), st.floats(0, 10))
def test_obstacle_cost_matches_piecewise_and_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert obstacle_cost(lo, PARAMS) >= obstacle_cost(hi, PARAMS)
    assert obstacle_cost(a, PARAMS) == pytest.approx(piecewise_cost(a), abs=1e-12)


# --- queries --------------------------------------------------------------


def test_query_at_centers_returns_stored_value():
    rng = np.random.default_rng(1)
    g = random_grid(rng, (6, 6, 6), 0.1)
    f = compute_distance_field(g)
    for idx in [(0, 0, 0), (5, 5, 5), (2, 3, 4)]:
        assert query_distance(f, g.center(idx)) == f.distance[idx]


def test_query_midpoint_is_linear():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (4, 1, 1), cell_size_z=1.0)
    mask = np.zeros(g.dims, dtype=bool)
    mask[0, 0, 0] = True
    f = compute_distance_field(g.with_occupied(mask))
    # centers 1.5 and 2.5 carry distances 1 and 2
    assert query_distance(f, (2.0, 0.5, 0.5)) == pytest.approx(1.5)


def test_query_stays_within_surrounding_values():
    rng = np.random.default_rng(5)
    g = random_grid(rng, (8, 8, 8), 0.1)
    f = compute_distance_field(g)
    lo = g.origin + 0.5 * g.cell_sizes
    hi = g.upper - 0.5 * g.cell_sizes
    pts = lo + rng.random((100, 3)) * (hi - lo)
    vals, outside = query_distances(f, pts)
    assert not outside.any()
    for p, v in zip(pts, vals):
        i0 = np.floor((p - g.origin) / g.cell_sizes - 0.5).astype(int)
        i0 = np.minimum(i0, np.array(g.dims) - 2)
        block = f.distance[i0[0]:i0[0] + 2, i0[1]:i0[1] + 2, i0[2]:i0[2] + 2]
        assert block.min() - 1e-12 <= v <= block.max() + 1e-12


def test_query_out_of_bounds_names_axis():
    g = OccupancyGrid.empty((0, 0, 0), 1.0, (4, 4, 4), cell_size_z=1.0)
    f = compute_distance_field(g)
    with pytest.raises(GridRangeError, match="z"):
        query_distance(f, (1.0, 1.0, 7.0))
    _, outside = query_distances(f, [(1.0, 1.0, 7.0), (1.0, 1.0, 1.0)])
    assert outside.tolist() == [True, False]
