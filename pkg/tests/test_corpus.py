import numpy as np
import pytest

from hardyloc.corpus import (STANDARD_SPEC, CorpusError, bump, corpus_generate, haar_osc,
                             smooth_bump, standard_corpus, tent)
from hardyloc.grid import make_grid

G = make_grid(1, 8.0, 512)


def test_standard_corpus_has_ten_named_members():
    names = [n for n, _ in standard_corpus(G)]
    assert len(names) == 10 and len(set(names)) == 10


def test_generation_is_deterministic():
    a = standard_corpus(G, seed=3)
    b = standard_corpus(G, seed=3)
    for (_, f), (_, g) in zip(a, b):
        assert np.array_equal(f.values, g.values)


def test_seed_changes_random_members():
    a = dict(corpus_generate("random:2", G, seed=0))
    b = dict(corpus_generate("random:2", G, seed=5))
    assert not np.array_equal(a["random0"].values, b["random0"].values)


@pytest.mark.parametrize("spec", ["nope", "tent:3", "random:x"])
def test_bad_members_are_rejected(spec):
    with pytest.raises((CorpusError, ValueError)):
        corpus_generate(spec, G)


def test_members_supported_in_radius_two():
    outside = np.abs(G.axis) > 2.0
    for _, f in standard_corpus(G):
        assert np.all(f.values[outside] == 0)


def test_random_members_pair_with_bump():
    weight = bump(G.axis ** 2)
    for _, f in corpus_generate("random:6", G):
        assert abs(np.sum(f.values * weight)) * G.h > 1e-4
        assert np.abs(f.values).max() == pytest.approx(1.0)


def test_tent_and_bump_peak_at_one():
    g = G
    assert tent(g).values.max() == pytest.approx(1.0, abs=g.h)
    assert smooth_bump(g).values.max() == pytest.approx(1.0, abs=g.h)


def test_haar_oscillation_has_zero_mean():
    assert haar_osc(G).values.sum() == 0


def test_two_dimensional_corpus():
    g = make_grid(2, 8.0, 64)
    members = corpus_generate(STANDARD_SPEC, g)
    assert all(f.values.shape == (64, 64) for _, f in members)
