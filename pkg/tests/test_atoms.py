import math

import numpy as np
import pytest

from hardyloc.atoms import (SINGLE, Atom, AtomicDecomposition, DecompositionError,
                            atomic_decompose, atomic_norm_upper, combine_atoms, finite_decompose,
                            haar_atoms, oscillation_atom, reconstruct, unit_split, validate_atom)
from hardyloc.corpus import standard_corpus, tent
from hardyloc.grid import Cube, SampledFunction, cube_measure, make_grid
from hardyloc.weights import HardyParams, parse_weight

G = make_grid(1, 8.0, 1024)
W = parse_weight("exp:1", G)
P0 = HardyParams.default(1.0)


def indicator_atom(cube, p=1.0):
    box = cube.index_box(G)
    patch = np.full(box[0].stop - box[0].start, cube_measure(W, G, cube) ** (-1 / p))
    return Atom(G, box, patch, cube, p=p)


def test_haar_atom_passes():
    a = oscillation_atom(G, W, Cube((0.25,), 0.5))
    rep = validate_atom(a, W)
    assert rep.passed and rep.moments_required and rep.moment_residual < 1e-14


def test_small_indicator_fails_on_moments():
    rep = validate_atom(indicator_atom(Cube((0.25,), 0.5)), W)
    assert rep.support_ok and rep.norm_ok and not rep.moments_ok and not rep.passed


def test_large_indicator_needs_no_moments():
    rep = validate_atom(indicator_atom(Cube((0.0,), 2.0)), W)
    assert rep.passed and not rep.moments_required


def test_higher_order_oscillation_atom():
    a = oscillation_atom(G, W, Cube((0.0,), 0.5), p=2 / 3, q=4.0, s=1)
    assert validate_atom(a, W).passed


def test_haar_family_size():
    atoms = haar_atoms(G, W)
    assert len(atoms) == 20 and all(validate_atom(a, W).passed for a in atoms)


@pytest.fixture(scope="module")
def tent_dec(dn_1d):
    return atomic_decompose(tent(G), W, P0, dn_1d)


def test_tent_reconstruction_and_validity(tent_dec):
    f = tent(G)
    assert np.abs(reconstruct(tent_dec).values - f.values).max() <= 1e-8
    assert all(validate_atom(a, W).passed for a in tent_dec.atoms)
    assert tent_dec.single is None
    assert tent_dec.diagnostics["telescoping_error"] <= 1e-9


def test_zero_function_gives_empty_decomposition(dn_1d):
    dec = atomic_decompose(SampledFunction.zeros(G), W, P0, dn_1d)
    assert len(dec) == 0 and dec.single is None and atomic_norm_upper(dec) == 0


def test_coefficients_scale_linearly(tent_dec, dn_1d):
    dec2 = atomic_decompose(tent(G) * 2.0, W, P0, dn_1d)
    assert len(dec2) == len(tent_dec)
    assert np.allclose(dec2.coefficients, 2 * np.asarray(tent_dec.coefficients), rtol=1e-12)


def test_single_atom_gate(dn_1d):
    g = make_grid(1, 8.0, 512)
    w = parse_weight("exp:1", g)
    everywhere = SampledFunction(g, 1.0 + 0.5 * np.cos(g.axis))
    dec = atomic_decompose(everywhere, w, P0, dn_1d)
    assert dec.single is not None and dec.single.kind == SINGLE and dec.k0 is not None
    assert validate_atom(dec.single, w).passed
    err = np.abs(reconstruct(dec).values - everywhere.values).max()
    assert err <= 1e-8 * everywhere.sup_norm()
    missing = reconstruct(dec, include_single=False).values
    assert np.allclose(everywhere.values - missing, dec.lambda0 * dec.single.values.values,
                       rtol=0, atol=1e-12)


def test_k_range_too_small(dn_1d):
    with pytest.raises(DecompositionError, match="k_max"):
        atomic_decompose(tent(G), W, P0, dn_1d, k_range=(-5, -4))


def test_one_atom_reconstructs(dn_1d):
    a = oscillation_atom(G, W, Cube((0.25,), 0.5))
    f = a.values
    dec = atomic_decompose(f, W, P0, dn_1d)
    assert np.abs(reconstruct(dec).values - f.values).max() <= 1e-8 * f.sup_norm()


def test_manifest_round_trip(tent_dec, tmp_path):
    tent_dec.save(tmp_path / "dec.json", atom_csv_dir=tmp_path / "atoms")
    back = AtomicDecomposition.load(tmp_path / "dec.json")
    assert back.coefficients == tent_dec.coefficients
    assert np.array_equal(reconstruct(back).values, reconstruct(tent_dec).values)
    assert len(list((tmp_path / "atoms").glob("*.csv"))) == len(tent_dec)


def test_unit_split_counts():
    cubes = unit_split(Cube((0.0,), 8.0))
    assert 4 <= len(cubes) <= 8
    assert all(1 <= q.side <= 2 for q in cubes)


def test_finite_decomposition(dn_1d, d0_1d):
    params = HardyParams(1.0, 4.0, 0, 2)
    atoms = haar_atoms(G, W, 1.0, 4.0, 0)[:3]
    coeffs = [1.0, 0.5, 0.75]
    fin = finite_decompose(atoms, coeffs, W, params, dn_1d, d0_1d)
    f = combine_atoms(atoms, coeffs)
    assert np.abs(fin.reconstruct().values - f.values).max() <= 1e-10
    assert all(validate_atom(a, W).passed for a in fin.atoms)
    assert 0 < fin.ratio < math.inf


def test_finite_needs_finite_q(dn_1d):
    with pytest.raises(DecompositionError):
        finite_decompose(haar_atoms(G, W)[:1], [1.0], W, P0, dn_1d)


def test_corpus_member_decompositions(dn_1d_s1):
    params = HardyParams(2 / 3, math.inf, 1, 3)
    w = parse_weight("const:1", G)
    for name, f in standard_corpus(G)[:4]:
        dec = atomic_decompose(f, w, params, dn_1d_s1)
        assert all(validate_atom(a, w).passed for a in dec.atoms), name
        assert np.abs(reconstruct(dec).values - f.values).max() <= 1e-8 * f.sup_norm()
