import math

import numpy as np
import pytest

from hardyloc.grid import (Cube, GridError, SampledFunction, cube_measure, grid_cube, integrate,
                           make_grid, weighted_lp_norm, weighted_measure)


def test_cell_centres_and_spacing():
    g = make_grid(1, 8.0, 64)
    assert g.h == 0.25
    assert g.axis[0] == -8 + 0.125 and g.axis[-1] == 8 - 0.125
    assert g.refine().m == 128


@pytest.mark.parametrize("n,m", [(3, 16), (1, 4)])
def test_bad_grid_rejected(n, m):
    with pytest.raises(GridError):
        make_grid(n, 8.0, m)


def test_integral_of_constant_over_region():
    g = make_grid(1, 8.0, 64)
    f = SampledFunction(g, np.ones(g.shape))
    assert math.isclose(integrate(f), 16.0)
    assert math.isclose(integrate(f, Cube((0.0,), 1.0)), 1.0)


def test_integral_2d_region():
    g = make_grid(2, 4.0, 32)
    f = SampledFunction(g, np.ones(g.shape))
    assert math.isclose(integrate(f, Cube((0.0, 0.0), 2.0)), 4.0)


def test_aligned_cube_index_box_is_cell_exact():
    g = make_grid(1, 8.0, 64)
    q = grid_cube(g, [10], 4)
    box = q.index_box(g)
    assert box[0].start == 10 and box[0].stop == 14
    assert q.mask(g).sum() == 4


def test_complex_values_kept():
    g = make_grid(1, 4.0, 16)
    f = SampledFunction(g, np.exp(1j * g.axis))
    assert not f.real
    assert isinstance(integrate(f), complex)


def test_json_and_csv_round_trip(tmp_path):
    g = make_grid(1, 4.0, 16)
    f = SampledFunction(g, np.sin(g.axis) + 0.5j * g.axis)
    f.save_json(tmp_path / "f.json")
    back = SampledFunction.load_json(tmp_path / "f.json")
    assert np.array_equal(back.values, f.values)
    f.save_csv(tmp_path / "f.csv")
    back = SampledFunction.load_csv(tmp_path / "f.csv", L=4.0)
    assert np.allclose(back.values, f.values, rtol=0, atol=1e-15)


def test_weighted_norms():
    g = make_grid(1, 8.0, 128)
    w = SampledFunction(g, np.full(g.shape, 2.0))
    f = SampledFunction(g, np.where(np.abs(g.axis) < 1, 3.0, 0.0))
    assert math.isclose(weighted_lp_norm(f, w, 2.0), math.sqrt(9 * 2 * 2))
    assert math.isclose(weighted_lp_norm(f, w, math.inf), 3.0)
    assert math.isclose(weighted_measure(w, g), 32.0)
    assert math.isclose(cube_measure(w, g, Cube((0.0,), 1.0)), 2.0)
    half = weighted_lp_norm(f, w, 0.5)
    assert math.isclose(half, (math.sqrt(3) * 4) ** 2)
