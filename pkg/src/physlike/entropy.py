"""Topological and metric entropy: transfer matrices, Parry measures and Bowen spanning counts.

All entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import strongly_connected_components
from .errors import InvalidArgument
from .measures import DiscreteMeasure
from .systems import PeriodicWord, iter_orbits

BRACKET_WIDTH = 1e-9
STATIONARY_TOL = 1e-10
GAP_TOL = 1e-9


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    method: str
    n: int | None = None
    epsilon: float | None = None
    span_count: int | None = None
    bracket: tuple | None = None

    def to_json(self):
        out = {
            "method": self.method,
            "value": self.value,
            "bracket": list(self.bracket) if self.bracket is not None else None,
            "n": self.n,
            "epsilon": self.epsilon,
            "span_count": self.span_count,
        }
        if self.method == "spanning":
            out["note"] = "finite (n, epsilon) spanning count of the seed set; not a limit"
        return out


def _adjacency(system_or_matrix):
    A = getattr(system_or_matrix, "adjacency", system_or_matrix)
    A = np.asarray(A, dtype=np.int64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidArgument("adjacency must be a nonempty square matrix")
    return A


def irreducible_partition(A):
    """Strongly connected components of the symbol graph, each sorted."""
    adj = [np.flatnonzero(row).tolist() for row in A]
    return sorted(sorted(c) for c in strongly_connected_components(adj))


def _check_irreducible(A):
    parts = irreducible_partition(A)
    if len(parts) != 1:
        raise InvalidArgument(f"adjacency is reducible; symbol classes {parts}")


def _cw_bracket(B, v):
    """Collatz-Wielandt bounds ``min (Bv)_i/v_i <= rho(B) <= max (Bv)_i/v_i`` for ``v > 0``."""
    ratio = (B @ v) / v
    return float(ratio.min()), float(ratio.max())


def perron_root(A, max_iter=100000):
    """Spectral radius of an irreducible 0/1 matrix with a certified bracket ``(lo, hi)``.

    Works with the primitive matrix ``A + I`` (same Perron vector, root shifted by
    one), starting from the numerical eigenvector and refining by power iteration.
    """
    A = np.asarray(A, dtype=float)
    B = A + np.eye(A.shape[0])
    w, V = np.linalg.eig(B)
    v = np.abs(V[:, int(np.argmax(w.real))].real)
    if not (v > 0).all():
        v = np.ones(A.shape[0])
    v /= v.sum()
    lo, hi = _cw_bracket(B, v)
    it = 0
    while hi - lo > BRACKET_WIDTH * (lo - 1.0 if lo > 2.0 else 1.0) and it < max_iter:
        v = B @ v
        v /= v.sum()
        lo, hi = _cw_bracket(B, v)
        it += 1
    return 0.5 * (lo + hi) - 1.0, (lo - 1.0, hi - 1.0), v


def sft_entropy(system) -> EntropyEstimate:
    """``log`` of the spectral radius of the transfer matrix."""
    A = _adjacency(system)
    _check_irreducible(A)
    lam, (lo, hi), _ = perron_root(A)
    lo = max(lo, 1.0)
    hi = max(hi, 1.0)
    return EntropyEstimate(value=math.log(max(lam, 1.0)), method="transfer_matrix", bracket=(math.log(lo), math.log(hi)))


def parry_measure(system):
    """Stationary vector ``pi`` and transition matrix ``P`` of the maximal-entropy Markov measure.

    ``P_ij = A_ij v_j / (lambda v_i)`` with ``v`` the right Perron vector and
    ``pi_i`` proportional to ``u_i v_i`` with ``u`` the left one.
    """
    A = _adjacency(system)
    _check_irreducible(A)
    lam, _, v = perron_root(A)
    _, _, u = perron_root(A.T)
    P = A * v[None, :] / (lam * v[:, None])
    P /= P.sum(axis=1, keepdims=True)
    pi = u * v
    pi /= pi.sum()
    return pi, P


def sampling_chain(system):
    """Markov chain used to draw random admissible sequences.

    The Parry chain when the adjacency is irreducible, otherwise uniform
    successors from a uniform start.
    """
    try:
        return parry_measure(system)
    except InvalidArgument:
        A = _adjacency(system).astype(float)
        return np.full(A.shape[0], 1.0 / A.shape[0]), A / A.sum(axis=1, keepdims=True)


def markov_metric_entropy(system, stationary, transition) -> float:
    """``-sum_i pi_i sum_j P_ij log P_ij`` for a Markov measure compatible with the adjacency."""
    A = _adjacency(system)
    pi = np.asarray(stationary, dtype=float).ravel()
    P = np.asarray(transition, dtype=float)
    k = A.shape[0]
    if pi.shape != (k,) or P.shape != (k, k):
        raise InvalidArgument("stationary vector and transition matrix do not match the alphabet")
    if (pi < 0).any() or abs(pi.sum() - 1.0) > STATIONARY_TOL:
        raise InvalidArgument("stationary vector is not a probability vector")
    if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > STATIONARY_TOL:
        raise InvalidArgument("transition matrix is not stochastic")
    if ((P > 0) & (A == 0)).any():
        raise InvalidArgument("transition matrix uses forbidden transitions")
    if np.abs(pi @ P - pi).max() > STATIONARY_TOL:
        raise InvalidArgument("pi is not stationary for P")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0)
    return float(max(0.0, -(pi @ terms.sum(axis=1))))


# ---------------------------------------------------------------------------
# Bowen spanning sets


def _bowen_orbits(system, seed_points, n):
    parts = list(iter_orbits(system, seed_points, n))
    return np.concatenate(parts, axis=0)  # (n, m, dim)


def _within(system, orbits, idx, centers, epsilon):
    """Boolean matrix: Bowen distance from seed ``idx[i]`` to seed ``centers[j]`` is ``<= epsilon``.

    Pairs are pruned step by step, so only pairs still close get re-measured.
    """
    out = np.zeros((len(idx), len(centers)), dtype=bool)
    if len(centers) == 0 or len(idx) == 0:
        return out
    d0 = system.distance(orbits[0, idx][:, None, :], orbits[0, centers][None, :, :])
    rows, cols = np.nonzero(d0 <= epsilon)
    for t in range(1, orbits.shape[0]):
        if rows.size == 0:
            break
        keep = system.distance(orbits[t, idx[rows]], orbits[t, centers[cols]]) <= epsilon
        rows, cols = rows[keep], cols[keep]
    out[rows, cols] = True
    return out


def greedy_spanning_set(system, seed_points, n, epsilon, block=256):
    """Indices of a greedy ``(n, epsilon)``-spanning subset of ``seed_points``.

    Seeds are scanned in order; a seed farther than ``epsilon`` (Bowen metric
    ``max_{j<n} d(f^j x, f^j y)``) from every chosen center becomes a center.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if epsilon <= 0:
        raise InvalidArgument("epsilon must be positive")
    m = len(seed_points)
    if m == 0:
        return []
    orbits = _bowen_orbits(system, seed_points, n)
    centers: list[int] = []
    for s in range(0, m, block):
        idx = np.arange(s, min(m, s + block))
        covered = _within(system, orbits, idx, np.asarray(centers, dtype=np.int64), epsilon).any(axis=1)
        local = _within(system, orbits, idx, idx, epsilon)
        fresh = []
        for i in range(len(idx)):
            if covered[i]:
                continue
            if fresh and local[i, fresh].any():
                continue
            fresh.append(i)
        centers.extend(idx[fresh].tolist())
    return centers


def spanning_entropy_estimate(system, seed_points, n, epsilon) -> EntropyEstimate:
    """``(1/n) log(span_count)`` for a greedy ``(n, epsilon)``-spanning subset of the seeds."""
    centers = greedy_spanning_set(system, seed_points, n, epsilon)
    count = len(centers)
    value = math.log(count) / n if count else 0.0
    return EntropyEstimate(value=value, method="spanning", n=int(n), epsilon=float(epsilon), span_count=count)


# ---------------------------------------------------------------------------
# variational comparison


@dataclass(frozen=True)
class MarkovCandidate:
    stationary: np.ndarray
    transition: np.ndarray
    label: str = "markov"


@dataclass
class GapReport:
    sup_h_mu: float
    h_top: float
    gap: str
    candidates: list = field(default_factory=list)

    def as_tuple(self):
        return (self.sup_h_mu, self.h_top, self.gap)

    def to_json(self):
        return {"sup_h_mu": self.sup_h_mu, "h_top": self.h_top, "gap": self.gap, "candidates": self.candidates}


def _candidate_entropy(system, cand):
    if isinstance(cand, (PeriodicWord, DiscreteMeasure)):
        return "periodic", 0.0
    if isinstance(cand, MarkovCandidate):
        return cand.label, markov_metric_entropy(system, cand.stationary, cand.transition)
    if isinstance(cand, dict):
        kind = cand.get("type")
        if kind == "periodic":
            word = PeriodicWord(tuple(cand["word"]))
            if not system.is_admissible(word):
                raise InvalidArgument(f"periodic candidate {list(word.block)} is not admissible")
            return "periodic", 0.0
        if kind == "parry":
            pi, P = parry_measure(system)
            return "parry", markov_metric_entropy(system, pi, P)
        if kind == "markov":
            return "markov", markov_metric_entropy(system, cand["stationary"], cand["transition"])
        raise InvalidArgument(f"unknown candidate type {kind!r}")
    if isinstance(cand, tuple) and len(cand) == 2:
        return "markov", markov_metric_entropy(system, cand[0], cand[1])
    raise InvalidArgument(f"cannot interpret candidate {cand!r}")


def entropy_gap_report(system, o_f_candidates) -> GapReport:
    """Compare ``sup h_mu`` over candidate physical-like measures with ``h_top``.

    ``gap`` is ``"strict"`` when the sup falls below ``h_top`` by more than
    ``GAP_TOL``, else ``"none"``.
    """
    cands = list(o_f_candidates)
    if not cands:
        raise InvalidArgument("no candidates")
    h_top = sft_entropy(system).value
    rows = []
    for c in cands:
        kind, h = _candidate_entropy(system, c)
        rows.append({"type": kind, "h_mu": h})
    sup = max(r["h_mu"] for r in rows)
    gap = "strict" if sup < h_top - GAP_TOL else "none"
    return GapReport(sup, h_top, gap, rows)
