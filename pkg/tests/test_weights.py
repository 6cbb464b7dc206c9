import math

import numpy as np
import pytest

import oracles
from hardyloc.grid import SampledFunction, make_grid
from hardyloc.weights import (HardyParams, WeightError, ap_loc_constant, ap_phi_constant,
                              bmo_loc_norm, bmo_loc_sweep, check_weight_properties,
                              critical_index_diagnostic, oscillation_decay, parse_weight,
                              weighted_oscillation_ratio)

G256 = make_grid(1, 8.0, 256)


@pytest.mark.parametrize("desc", ["const:1", "const:3.5"])
def test_constant_weight_has_constant_one(desc):
    for p in (1.0, 1.5, 2.0, 4.0):
        assert ap_loc_constant(parse_weight(desc, G256), p).constant == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("desc", ["exp:1", "powlog:1,1", "abspow:0.5", "abspow:-0.5"])
@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0])
def test_ap_loc_matches_double_loop(desc, p):
    w = parse_weight(desc, G256)
    rep = ap_loc_constant(w, p)
    val, start, k = oracles.ap_loc(w.values, G256.h, p)
    assert rep.constant == pytest.approx(val, rel=1e-12)
    assert rep.cube.side == pytest.approx(k * G256.h)


def test_unknown_descriptor_and_bad_p():
    with pytest.raises(WeightError):
        parse_weight("gauss:1", G256)
    with pytest.raises(WeightError):
        ap_loc_constant(parse_weight("exp:1", G256), 0.5)


def test_duality_and_monotonicity_for_exponential():
    w = parse_weight("exp:1", make_grid(1, 8.0, 1024))
    rep = check_weight_properties(w, 2.0)
    assert rep.monotone
    assert rep.duality_rel_err < 1e-10


def test_exponential_weight_unit_growth_but_not_doubling():
    g = make_grid(1, 8.0, 256)
    w = parse_weight("exp:1", g)
    rep = check_weight_properties(w, 2.0)
    # growing the side by one multiplies the mass by at most about e
    assert 2.0 < rep.doubling_large <= math.e * 1.01
    # doubling ratios are unbounded: w(2Q)/w(Q) over centred cubes grows with the side
    vals = w.values
    ratios = [vals[np.abs(g.axis) < 2 * r].sum() / vals[np.abs(g.axis) < r].sum() for r in (1, 2, 3)]
    assert ratios[0] < ratios[1] < ratios[2] and ratios[2] > 10


def test_growth_weight_constant_stays_finite_under_refinement():
    vals = [ap_loc_constant(parse_weight("exp:1", make_grid(1, 8.0, m)), 2.0).constant
            for m in (256, 512, 1024)]
    assert max(vals) / min(vals) < 1.05


def test_ap_phi_damping_reduces_constant():
    w = parse_weight("exp:1", G256)
    small = ap_phi_constant(w, 2.0, alpha=4.0).constant
    large = ap_phi_constant(w, 2.0, alpha=0.0).constant
    assert small <= large


def test_critical_index_of_constant_weight():
    table = critical_index_diagnostic("const:1", 1, 8.0, [1.0, 1.5, 2.0], ms=(128, 256))
    assert table.stable_floor == pytest.approx(1.0)


def test_bmo_matches_double_loop_and_is_finite_for_log():
    b = SampledFunction(G256, np.log(np.abs(G256.axis)))
    assert bmo_loc_norm(b) == pytest.approx(oracles.bmo_loc(b.values, G256.h), rel=1e-12)
    norm, cube = bmo_loc_sweep(b)
    assert math.isfinite(norm) and cube.side <= 1


def test_bmo_of_constant_is_zero():
    assert bmo_loc_norm(SampledFunction(G256, np.full(G256.shape, 2.0))) == 0


def test_weighted_oscillation_ratio_is_bounded():
    b = SampledFunction(G256, np.log1p(np.abs(G256.axis)))
    r = weighted_oscillation_ratio(b, parse_weight("exp:1", G256), 2.0)
    assert 0 < r < 10


def test_oscillation_decay_runs():
    b = SampledFunction(G256, np.log(np.abs(G256.axis)))
    rep = oscillation_decay(b, parse_weight("const:1", G256), [0.5, 1.0, 2.0, 4.0])
    assert len(rep.to_dict()) > 0


def test_hardy_params_invariants():
    params = HardyParams.default(1.0)
    assert (params.s, params.N) == (0, 2)
    assert HardyParams.default(0.5).s == 1
    assert HardyParams.default(2 / 3, s=1).N == 2
    with pytest.raises(WeightError):
        HardyParams(2.0, math.inf, 0, 2)
    with pytest.raises(WeightError):
        HardyParams(0.5, math.inf, 0, 4)
    with pytest.raises(WeightError):
        HardyParams(1.0, 1.0, 0, 2)
    assert HardyParams.default(1.0).to_dict()["q"] == "inf"
