import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fovplan.pipeline import PipelineConfig, fd_accelerations, run_pipeline, trajectory_stats
from fovplan.scenes import PRESETS, hidden_cube, make_scene


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_have_free_endpoints(name):
    sc = make_scene(name)
    assert sc.grid.cell_size_z == pytest.approx(math.tan(math.radians(15)))
    for p in (sc.start, sc.goal):
        idx = sc.grid.cell_of(p[:3])
        assert not sc.grid.is_occupied(idx)
        assert np.allclose(sc.grid.center(idx), p[:3])


def test_wall_has_no_holes():
    # every column of the wall slab is blocked up to the wall height
    for name in ("wall", "wall-with-opening"):
        g = make_scene(name).grid
        heights = g.axis_centers(2)
        slab = g.occupied[29:31, :, heights < 4.0]
        if name == "wall":
            assert slab.all()
        else:
            ys = g.axis_centers(1)
            side = (ys < 8) | (ys > 13)
            assert slab[:, side].all()


def test_unknown_preset():
    with pytest.raises(ValueError):
        make_scene("moon")


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_hidden_cube_centre_near_line(seed):
    sc = make_scene("corridor")
    lo, hi = hidden_cube(np.random.default_rng(seed), sc.start, sc.goal)
    c = 0.5 * (np.array(lo) + np.array(hi))
    s, g = np.array(sc.start[:3]), np.array(sc.goal[:3])
    u = (g - s) / np.linalg.norm(g - s)
    t = float((c - s) @ u)
    assert np.linalg.norm(c - s - t * u) <= 1.0 + 1e-12
    assert 0.45 * np.linalg.norm(g - s) - 1e-9 <= t <= 0.75 * np.linalg.norm(g - s) + 1e-9
    assert np.allclose(np.array(hi) - np.array(lo), 4.0)


def test_hidden_cube_is_seeded():
    sc = make_scene("corridor")
    a = hidden_cube(np.random.default_rng([1, 2]), sc.start, sc.goal)
    b = hidden_cube(np.random.default_rng([1, 2]), sc.start, sc.goal)
    assert a == b


def test_pipeline_on_wall_is_feasible():
    sc = make_scene("wall")
    res = run_pipeline(sc.grid, sc.start, sc.goal, PipelineConfig())
    s = trajectory_stats(res.trajectory)
    assert s["max_angle_deg"] <= 15.5
    assert s["max_speed"] <= 3.0 + 1e-9
    assert np.linalg.norm(fd_accelerations(res.trajectory), axis=1).max() <= 2.0 + 1e-6
    assert np.array_equal(res.trajectory.positions[0], np.array(sc.start[:3]))
    assert np.allclose(res.trajectory.positions[-1], np.array(sc.goal[:3]))
    assert set(res.timings) == {"distance_field", "plan", "retime", "optimize", "final_retime"}
