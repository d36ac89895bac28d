import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from physlike.approximation import (
    Component,
    ErgodicPresentation,
    approximate_by_periodic_measure,
    check_birkhoff_budget,
    graph_for,
    truncation_for,
    validate_run,
)
from physlike.errors import BudgetFailure, InvalidArgument, UnsupportedSystem
from physlike.gluing import shadow_bound
from physlike.measures import TrigFamily
from physlike.systems import PeriodicWord, doubling, full_shift, north_south, orbit_segment

HALF = Fraction(1, 2)


@pytest.fixture(scope="module")
def full_shift_run():
    pres = ErgodicPresentation((Component(PeriodicWord((0,)), HALF), Component(PeriodicWord((1,)), HALF)))
    return approximate_by_periodic_measure(pres, 0.1, system=full_shift())


@pytest.fixture(scope="module")
def doubling_run():
    pres = ErgodicPresentation((Component((Fraction(0),), HALF), Component((Fraction(1, 3),), HALF)))
    return approximate_by_periodic_measure(pres, 0.2, system=doubling())


def test_truncation_for():
    assert truncation_for(0.1) == 6  # 2^-6 < 0.02 <= 2^-5
    assert truncation_for(0.2) == 5


def test_presentation_weights():
    p = ErgodicPresentation(((PeriodicWord((0,)), Fraction(1, 3)), (PeriodicWord((1,)), Fraction(2, 3))))
    assert p.multiplicities == (1, 2) and p.m == 3
    with pytest.raises(InvalidArgument):
        ErgodicPresentation(((PeriodicWord((0,)), 0.5), (PeriodicWord((1,)), 0.4)))
    with pytest.raises(InvalidArgument):
        ErgodicPresentation(())


def test_birkhoff_budget_fixed_points():
    fam = TrigFamily(1, 10)
    x = (Fraction(0),)
    ref = fam.evaluate(np.zeros((1, 1)))[0]
    assert check_birkhoff_budget(doubling(), x, 1000, fam, ref).max() == 0.0
    from physlike.measures import CylinderFamily

    cf = CylinderFamily(full_shift(), 10)
    z = PeriodicWord((0,))
    ref = cf.evaluate(z.sequence(64).reshape(1, -1))[0]
    assert check_birkhoff_budget(full_shift(), z, 500, cf, ref).max() == 0.0


def test_birkhoff_budget_doubling_lebesgue():
    fam = TrigFamily(1, 20)
    x = doubling().sample_points([np.random.default_rng(123)])[0]
    dev = check_birkhoff_budget(doubling(), x, 10**5, fam, fam.lebesgue_moments())
    assert dev.max() < 0.01


def test_fixed_point_presentation_is_exact():
    pres = ErgodicPresentation((Component(PeriodicWord((0,)), 1),))
    run = approximate_by_periodic_measure(pres, 0.1, system=full_shift())
    assert all(e == 0 for e in run.exact_errors)
    assert set(run.shadow.block) == {0}
    assert validate_run(run).ok


def test_full_shift_half_half(full_shift_run):
    run = full_shift_run
    N = run.N
    assert run.shadow.block == (0,) * (N + 2) + (1,) * (N + 2)
    assert run.schedule.gaps == (2, 2)
    assert all(isinstance(e, Fraction) for e in run.exact_errors)
    assert max(run.exact_errors) < Fraction(8, 100)
    # direct integration of each cylinder indicator over the orbit of the shadow
    p = run.period
    orbit = orbit_segment(full_shift(), run.shadow, p)
    for w, err in zip(run.family.words, run.exact_errors):
        hits = sum(1 for t in range(p) if tuple(orbit[t][: len(w)]) == w)
        target = HALF if len(set(w)) == 1 else Fraction(0)
        assert abs(Fraction(hits, p) - target) == err


def test_budget_terms_recorded(full_shift_run):
    t = full_shift_run.budget_terms
    for term in ("tail", "decomposition", "birkhoff", "gap", "shadowing"):
        assert t[term] < 0.1 / 5
    assert t["gap"] == 2 * full_shift_run.M_delta / full_shift_run.N


def test_doubling_mixture_against_summation_oracle(doubling_run):
    run = doubling_run
    p = run.period
    orbit = orbit_segment(doubling(), run.shadow, p).ravel()
    members = [(k, kind) for k in range(1, 4) for kind in ("cos", "sin")][: run.L]
    total = 0.0
    for n, (k, kind) in enumerate(members, start=1):
        g = np.cos if kind == "cos" else np.sin
        got = g(2 * np.pi * k * orbit).mean()
        want = 0.5 * g(0.0) + 0.5 * (g(2 * np.pi * k / 3) + g(4 * np.pi * k / 3)) / 2
        total += abs(got - want) / 2 ** (n + 1)
    assert total == pytest.approx(run.weak_star.value, abs=1e-9)
    assert total + 2.0**-run.L < 0.2
    assert validate_run(run).ok


def test_validate_detects_corruption(doubling_run):
    bad = dataclasses.replace(doubling_run, shadow=((doubling_run.shadow[0] + Fraction(3, 10)) % 1,))
    rep = validate_run(bad)
    assert not rep.ok
    assert "achieved_error" in rep.failing_terms


def test_validate_halved_epsilon_flags_exact_terms(full_shift_run):
    eps = 0.05
    rep = validate_run(full_shift_run, epsilon=eps)
    expected = [t for t in ("tail", "decomposition", "birkhoff", "gap", "shadowing") if full_shift_run.budget_terms[t] >= eps / 5]
    assert [t for t in rep.failing_terms if t in expected] == expected
    assert set(rep.failing_terms) - set(expected) <= {"achieved_error", "weak_star_distance"}
    assert not rep.ok


def test_budget_failure_names_term():
    pres = ErgodicPresentation((Component(PeriodicWord((0,)), HALF), Component(PeriodicWord((1,)), HALF)))
    with pytest.raises(BudgetFailure) as info:
        approximate_by_periodic_measure(pres, 1e-9, system=full_shift(), max_total_length=4096)
    assert info.value.term == "gap"


def test_non_expanding_map_unsupported():
    pres = ErgodicPresentation((Component((0.0,), 1),))
    with pytest.raises(UnsupportedSystem):
        approximate_by_periodic_measure(pres, 0.2, system=north_south())


def test_graph_for_meets_modulus():
    for system, dm in ((doubling(), 0.05), (full_shift(), 0.03)):
        g = graph_for(system, dm)
        bound, guaranteed = shadow_bound(g)
        assert guaranteed and bound <= dm
    fam = TrigFamily(1, 5)
    assert fam.modulus(0.02) == pytest.approx(0.02 / (2 * math.pi * 3))
