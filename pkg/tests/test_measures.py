import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physlike.errors import InvalidArgument
from physlike.measures import (
    CylinderFamily,
    DiscreteMeasure,
    TrigFamily,
    convex_combination,
    default_family,
    dirac,
    empirical_measure,
    pushforward,
    tail_bound,
    weak_star_distance,
)
from physlike.systems import doubling, full_shift, golden_mean, orbit_segment


def test_fixed_point_empirical_is_dirac():
    orbit = np.full((7, 1), 0.0)
    mu = empirical_measure(orbit, 7)
    np.testing.assert_allclose(mu.weights.sum(), 1.0)
    assert set(mu.atoms.ravel().tolist()) == {0.0}


def test_doubling_one_third_two_steps():
    orb = orbit_segment(doubling(), (Fraction(1, 3),), 2)
    mu = empirical_measure(orb, 2)
    np.testing.assert_allclose(sorted(mu.atoms.ravel()), [1 / 3, 2 / 3])
    assert mu.exact_weights() == [Fraction(1, 2)] * 2


def test_empirical_rejects_bad_n():
    with pytest.raises(InvalidArgument):
        empirical_measure(np.zeros((3, 1)), 4)
    with pytest.raises(InvalidArgument):
        empirical_measure(np.zeros((3, 1)), 0)


def test_measure_validation():
    with pytest.raises(InvalidArgument):
        DiscreteMeasure(np.zeros((2, 1)), [0.5, 0.6])
    with pytest.raises(InvalidArgument):
        DiscreteMeasure(np.zeros((2, 1)), [1.5, -0.5])


def test_convex_combination_of_two_diracs():
    mu = convex_combination([(Fraction(1, 2), dirac([0.1])), (Fraction(1, 2), dirac([0.6]))])
    assert len(mu) == 2
    assert mu.exact_weights() == [Fraction(1, 2), Fraction(1, 2)]
    single = convex_combination([(1, dirac([0.3]))])
    np.testing.assert_array_equal(single.atoms, [[0.3]])


def test_convex_combination_linear_against_bruteforce():
    fam = TrigFamily(1, 12)
    r = np.random.default_rng(3)
    mus = [DiscreteMeasure(r.random((5, 1)), np.full(5, 0.2)) for _ in range(3)]
    th = [0.2, 0.5, 0.3]
    mix = convex_combination(list(zip(th, mus)))
    for g in fam.functions:
        lhs = sum(w * g(a.reshape(1, -1))[0] for a, w in zip(mix.atoms, mix.weights))
        rhs = sum(t * sum(w * g(a.reshape(1, -1))[0] for a, w in zip(m.atoms, m.weights)) for t, m in zip(th, mus))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_pushforward():
    f = doubling()
    mu = pushforward(dirac([1 / 3]), f)
    np.testing.assert_allclose(mu.atoms, [[2 / 3]])
    nu = pushforward(dirac([0.0]), f)
    np.testing.assert_allclose(nu.atoms, [[0.0]])
    orb = DiscreteMeasure(np.array([[1 / 3], [2 / 3]]), [0.5, 0.5])
    img = pushforward(orb, f)
    np.testing.assert_allclose(sorted(img.atoms.ravel()), [1 / 3, 2 / 3])


def test_tail_bound_matches_geometric_sum():
    for L in (1, 3, 10):
        assert tail_bound(L) == pytest.approx(sum(2 / 2 ** (n + 1) for n in range(L + 1, 200)))
    assert tail_bound(3) == 1 / 8


def test_self_distance_zero():
    fam = TrigFamily(1, 20)
    mu = DiscreteMeasure(np.array([[0.1], [0.7]]), [0.4, 0.6])
    assert weak_star_distance(mu, mu, fam).value == 0.0


def _oracle_trig(k, kind, x):
    return math.cos(2 * math.pi * k * x) if kind == "cos" else math.sin(2 * math.pi * k * x)


def test_dirac_pair_matches_summation_oracle():
    fam = TrigFamily(1, 20)
    got = weak_star_distance(dirac([0.0]), dirac([0.5]), fam)
    # independent listing: cos k, sin k for k = 1..10; all sup norms 1
    members = [(k, kind) for k in range(1, 11) for kind in ("cos", "sin")]
    want = sum(abs(_oracle_trig(k, kind, 0.0) - _oracle_trig(k, kind, 0.5)) / 2 ** (n + 1) for n, (k, kind) in enumerate(members, start=1))
    assert got.value == pytest.approx(want, abs=1e-14)
    assert got.tail_bound == 2.0**-20


def test_trig_evaluate_matches_members():
    for d in (1, 2):
        fam = TrigFamily(d, 30)
        pts = np.random.default_rng(d).random((50, d))
        direct = np.stack([g(pts) for g in fam.functions], axis=1)
        np.testing.assert_allclose(fam.evaluate(pts), direct, atol=1e-12)
        assert np.all(np.abs(direct) <= 1 + 1e-12)


def test_lebesgue_moments_by_quadrature():
    fam = TrigFamily(1, 20)
    grid = (np.arange(4096) + 0.5) / 4096
    np.testing.assert_allclose(fam.evaluate(grid.reshape(-1, 1)).mean(axis=0), fam.lebesgue_moments(), atol=1e-12)


def test_cylinder_family_is_admissible_and_ordered():
    fam = CylinderFamily(golden_mean(), 12)
    assert all(golden_mean().is_admissible(w) for w in fam.words)
    lengths = [len(w) for w in fam.words]
    assert lengths == sorted(lengths)
    assert (1, 1) not in fam.words


def test_cylinder_exact_integration():
    fs = full_shift()
    fam = CylinderFamily(fs, 6)
    atoms = np.stack([np.zeros(64, dtype=np.int8), np.ones(64, dtype=np.int8)])
    mu = DiscreteMeasure(atoms, [0.5, 0.5], rational=(np.array([1, 1]), 2))
    vals = fam.integrate_exact(mu)
    words = fam.words
    for w, v in zip(words, vals):
        want = Fraction(1, 2) if len(set(w)) == 1 else Fraction(0)
        assert v == want


def test_markov_moments_uniform_full_shift():
    fam = CylinderFamily(full_shift(), 14)
    got = fam.markov_moments(np.array([0.5, 0.5]), np.full((2, 2), 0.5))
    np.testing.assert_allclose(got, [0.5 ** len(w) for w in fam.words])


def test_default_family_dispatch():
    assert isinstance(default_family(doubling()), TrigFamily)
    assert isinstance(default_family(golden_mean()), CylinderFamily)


def test_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        weak_star_distance(dirac([0.0, 0.0]), dirac([0.0, 0.0]), TrigFamily(1, 4))


weights = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(weights, st.integers(0, 2**31))
def test_weights_normalized(ws, seed):
    w = np.asarray(ws) / np.sum(ws)
    mu = DiscreteMeasure(np.random.default_rng(seed).random((len(w), 1)), w)
    assert mu.weights.sum() == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31))
def test_distance_symmetric_bounded_triangle(L, seed):
    fam = TrigFamily(1, 20)
    r = np.random.default_rng(seed)
    m = [DiscreteMeasure(r.random((4, 1)), np.full(4, 0.25)) for _ in range(3)]
    d = lambda a, b: weak_star_distance(a, b, fam, L).value
    assert d(m[0], m[1]) == pytest.approx(d(m[1], m[0]))
    assert d(m[0], m[2]) <= d(m[0], m[1]) + d(m[1], m[2]) + 1e-12
    # each term is at most 2/2^{n+1}
    assert d(m[0], m[1]) <= 1 - tail_bound(L) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 19), st.integers(0, 2**31))
def test_truncation_error_within_tail(L, seed):
    fam = TrigFamily(1, 20)
    r = np.random.default_rng(seed)
    a, b = (DiscreteMeasure(r.random((3, 1)), np.full(3, 1 / 3)) for _ in range(2))
    short = weak_star_distance(a, b, fam, L)
    full = weak_star_distance(a, b, fam, 20)
    assert short.value <= full.value + 1e-15
    assert full.value - short.value <= short.tail_bound
