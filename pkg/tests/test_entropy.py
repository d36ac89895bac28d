import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from physlike.entropy import (
    MarkovCandidate,
    entropy_gap_report,
    greedy_spanning_set,
    irreducible_partition,
    markov_metric_entropy,
    parry_measure,
    perron_root,
    sampling_chain,
    sft_entropy,
    spanning_entropy_estimate,
)
from physlike.errors import InvalidArgument
from physlike.systems import PeriodicWord, doubling, full_shift, golden_mean, identity, sft

GOLDEN = 0.481212


def charpoly_entropy(A):
    """log of the largest real root of det(xI - A), by sympy."""
    M = sympy.Matrix(A)
    x = sympy.symbols("x")
    roots = sympy.Poly(M.charpoly(x).as_expr(), x).real_roots()
    return math.log(float(max(roots).evalf(30)))


def stationary_of(P):
    w, V = np.linalg.eig(P.T)
    v = np.abs(V[:, np.argmin(np.abs(w - 1))].real)
    return v / v.sum()


def test_trivial_and_textbook_values():
    assert sft_entropy(sft([[1]])).value == 0.0
    assert sft_entropy(full_shift()).value == pytest.approx(math.log(2), abs=1e-12)
    h = sft_entropy(golden_mean())
    assert h.value == pytest.approx(GOLDEN, abs=1e-6)
    assert h.value == pytest.approx(charpoly_entropy([[1, 1], [1, 0]]), abs=1e-12)
    lo, hi = h.bracket
    assert lo <= h.value <= hi and hi - lo < 1e-12


@pytest.mark.parametrize(
    "A",
    [
        [[1, 1, 0], [0, 0, 1], [1, 1, 1]],
        [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[1, 1, 1, 0], [1, 0, 0, 1], [0, 1, 0, 1], [1, 0, 1, 0]],
    ],
)
def test_entropy_against_charpoly(A):
    assert sft_entropy(sft(A)).value == pytest.approx(charpoly_entropy(A), abs=1e-9)


def test_periodic_irreducible_matrix():
    # period-2 matrix: eigenvalues +-1, handled through A + I
    lam, (lo, hi), _ = perron_root(np.array([[0, 1], [1, 0]]))
    assert lam == pytest.approx(1.0) and lo <= 1.0 + 1e-12 and hi >= 1.0 - 1e-12


def test_reducible_rejected_and_partition():
    A = np.array([[1, 1], [0, 1]])
    assert irreducible_partition(A) == [[0], [1]]
    with pytest.raises(InvalidArgument):
        sft_entropy(sft(A))
    pi, P = sampling_chain(sft(A))
    np.testing.assert_allclose(P.sum(axis=1), 1)


def test_markov_entropy_values():
    assert markov_metric_entropy(sft([[0, 1], [1, 0]]), [0.5, 0.5], [[0, 1], [1, 0]]) == 0.0
    assert markov_metric_entropy(full_shift(), [0.5, 0.5], np.full((2, 2), 0.5)) == pytest.approx(math.log(2))
    pi, P = parry_measure(golden_mean())
    np.testing.assert_allclose(pi @ P, pi, atol=1e-12)
    assert markov_metric_entropy(golden_mean(), pi, P) == pytest.approx(sft_entropy(golden_mean()).value, abs=1e-6)


def test_incompatible_markov_rejected():
    with pytest.raises(InvalidArgument):
        markov_metric_entropy(golden_mean(), [0.5, 0.5], np.full((2, 2), 0.5))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([[[1, 1], [1, 0]], [[1, 1], [1, 1]], [[1, 1, 0], [0, 0, 1], [1, 1, 1]]]), st.integers(0, 2**31))
def test_variational_inequality(A, seed):
    A = np.asarray(A)
    W = np.random.default_rng(seed).random(A.shape) * A + 1e-9 * A
    P = W / W.sum(axis=1, keepdims=True)
    pi = stationary_of(P)
    system = sft(A)
    assert markov_metric_entropy(system, pi, P) <= sft_entropy(system).value + 1e-9


def test_gap_reports():
    g = golden_mean()
    rep = entropy_gap_report(g, [PeriodicWord((0, 1))])
    assert rep.sup_h_mu == 0.0 and rep.gap == "strict"
    assert rep.h_top == pytest.approx(GOLDEN, abs=1e-6)
    pi, P = parry_measure(g)
    rep = entropy_gap_report(g, [MarkovCandidate(pi, P)])
    assert rep.gap == "none"
    assert rep.sup_h_mu == pytest.approx(GOLDEN, abs=1e-6)
    with pytest.raises(InvalidArgument, match="no candidates"):
        entropy_gap_report(g, [])
    with pytest.raises(InvalidArgument):
        entropy_gap_report(g, [{"type": "periodic", "word": [1]}])


def test_identity_spanning_is_covering_number():
    seeds = [np.array([x]) for x in np.linspace(0, 0.95, 20)]
    eps = 0.12
    count = len(greedy_spanning_set(identity(), seeds, 5, eps))
    # the Bowen metric is static under the identity: plain greedy eps-cover on the circle
    centers = []
    for s in seeds:
        if all(min(abs(s[0] - c), 1 - abs(s[0] - c)) > eps for c in centers):
            centers.append(s[0])
    assert count == len(centers)
    values = [spanning_entropy_estimate(identity(), seeds, n, eps).value for n in (1, 10, 100)]
    assert values[0] > values[1] > values[2]


def test_doubling_spanning_near_log2():
    rngs = [np.random.default_rng([0, 0x656E, i]) for i in range(10**4)]
    seeds = [np.array([float(c) for c in p]) for p in doubling().sample_points(rngs)]
    est = spanning_entropy_estimate(doubling(), seeds, 12, 1 / 16)
    assert abs(est.value - math.log(2)) < 0.1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 120), st.integers(1, 120), st.integers(0, 2**31), st.integers(1, 6))
def test_spanning_monotone_for_prefixes(a, b, seed, n):
    lo, hi = sorted((a, b))
    r = np.random.default_rng(seed)
    seeds = [r.random(1) for _ in range(hi)]
    small = len(greedy_spanning_set(doubling(), seeds[:lo], n, 0.1))
    big = len(greedy_spanning_set(doubling(), seeds, n, 0.1))
    assert small <= big
