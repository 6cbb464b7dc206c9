import math

import numpy as np
import pytest

import oracles
from hardyloc.corpus import smooth_bump, tent
from hardyloc.czd import (PROJECTED, DegenerateMomentSystem, cz_decompose, monomials,
                          multi_indices, project_patch, verify_czd)
from hardyloc.grid import SampledFunction, make_grid
from hardyloc.maximal import NONTANGENTIAL, grand_maximal
from hardyloc.weights import HardyParams, parse_weight

P0 = HardyParams.default(1.0)
P1 = HardyParams(2 / 3, math.inf, 1, 3)


@pytest.fixture(scope="module")
def tent_case(dn_1d):
    g = make_grid(1, 8.0, 1024)
    f = tent(g)
    Mf = grand_maximal(f, dn_1d, NONTANGENTIAL)
    return g, f, Mf


@pytest.mark.parametrize("params", [P0, P1], ids=["s0", "s1"])
@pytest.mark.parametrize("frac", [0.5, 0.25, 0.1])
def test_reconstruction_and_support(tent_case, dn_1d, params, frac):
    g, f, Mf = tent_case
    dec = cz_decompose(f, frac * Mf.sup_norm(), params, dn_1d, Mf=Mf)
    assert dec.reconstruction_error() <= 1e-10 * f.sup_norm()
    dec.cover.check()
    for i in range(len(dec)):
        b = dec.bad(i).values
        eta = dec.partition.eta(i).values
        assert not np.any(b[eta == 0])
    # the good part lives at height lam outside nothing but f itself
    outside = ~dec.omega.mask
    assert np.array_equal(dec.g.values[outside], f.values[outside])


def test_projection_matches_high_precision_solve(tent_case, dn_1d):
    g, f, Mf = tent_case
    dec = cz_decompose(smooth_bump(g), 0.5 * Mf.sup_norm(), P1, dn_1d)
    checked = 0
    for i, proj in enumerate(dec.projections):
        if proj is None or dec.branches[i] != PROJECTED or proj.rank < 2:
            continue
        box = dec.box(i)
        ref = oracles.projection_1d(dec.f.values[box], dec.partition.eta_patches[i], g.axis[box],
                                    proj.center[0], proj.scale, 1)
        assert np.allclose(proj.coefficients, ref, rtol=1e-9, atol=1e-12)
        checked += 1
    assert checked > 0


@pytest.mark.parametrize("params", [P0, P1], ids=["s0", "s1"])
def test_bad_parts_have_vanishing_moments(dn_1d, params):
    g = make_grid(1, 8.0, 1024)
    f = smooth_bump(g)
    dec = cz_decompose(f, 0.3 * grand_maximal(f, dn_1d, NONTANGENTIAL).sup_norm(), params, dn_1d)
    for i, proj in enumerate(dec.projections):
        if proj is None:
            continue
        box = dec.box(i)
        u = [(g.axis[box] - proj.center[0]) / proj.scale]
        mom = monomials(u, multi_indices(1, params.s)).reshape(params.s + 1, -1) @ dec.bad_patches[i]
        scale = np.abs(f.values[box] * dec.partition.eta_patches[i]).sum()
        assert np.abs(mom).max() <= 1e-12 * scale


def test_empty_set_above_the_maximal_function(tent_case, dn_1d):
    g, f, Mf = tent_case
    dec = cz_decompose(f, 2 * Mf.sup_norm(), P0, dn_1d, Mf=Mf)
    assert len(dec) == 0 and np.array_equal(dec.g.values, f.values)


def test_degenerate_patch_raises():
    with pytest.raises(DegenerateMomentSystem):
        project_patch(np.ones(4), np.zeros(4), [np.arange(4.0)], (1.5,), 4.0, 1)


def test_single_sample_patch_uses_minimum_norm():
    proj = project_patch(np.array([0.0, 2.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                         [np.array([0.0, 1.0, 2.0])], (1.0,), 3.0, 2)
    assert proj.rank == 1 and math.isinf(proj.condition)
    assert proj(np.array([1.0]))[0] == pytest.approx(2.0)


@pytest.mark.parametrize("params", [P0, P1], ids=["s0", "s1"])
def test_measured_constants_and_decay(dn_1d, d0_1d, params):
    g = make_grid(1, 8.0, 1024)
    f = SampledFunction(g, smooth_bump(g).values * np.cos(3 * g.axis))
    Mf = grand_maximal(f, dn_1d, NONTANGENTIAL)
    rep = verify_czd(cz_decompose(f, 0.5 * Mf.sup_norm(), params, dn_1d, Mf=Mf), f,
                     parse_weight("exp:1", g), d0_1d)
    assert math.isfinite(rep.projection_bound) and math.isfinite(rep.bad_maximal_ratio)
    assert rep.decay_slope is not None
    assert rep.decay_slope <= -(1 + params.s + 1) + 0.5


def test_exports(tent_case, dn_1d, tmp_path):
    g, f, Mf = tent_case
    dec = cz_decompose(f, 0.5 * Mf.sup_norm(), P0, dn_1d, Mf=Mf)
    dec.save_json(tmp_path / "cz.json")
    dec.save_csv(tmp_path / "cz")
    assert len(list((tmp_path / "cz").glob("b_*.csv"))) == len(dec)


def test_two_dimensional_decomposition():
    from hardyloc.maximal import make_dictionary
    d = make_dictionary(2, 2, n_scales=3, variant="DN", support_radius=1.5)
    g = make_grid(2, 4.0, 64)
    f = smooth_bump(g)
    dec = cz_decompose(f, 0.5 * grand_maximal(f, d, NONTANGENTIAL).sup_norm(), P0.__class__.default(1.0, n=2), d)
    assert dec.reconstruction_error() <= 1e-10 * f.sup_norm()
