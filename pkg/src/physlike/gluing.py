"""Periodic gluing: concatenate orbit segments through delta-chains and shadow the result.

A schedule over segments ``(x_1, n_1) .. (x_k, n_k)`` lays out the periodic
pseudo-orbit

    x_1, f x_1, .., f^{n_1-1} x_1, [connector of m_1 points], x_2, ..

where connector ``i`` starts at the true point ``f^{n_i} x_i`` and walks box
centers to ``x_{i+1}`` (indices mod k).  A connector of ``m_i`` points is a box
path with ``m_i`` edges, so ``m_i`` is bounded by the gluing constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix

from .chain import ChainClass, PseudoOrbit, TransitionGraph, find_delta_chain
from .errors import InternalInconsistency, InvalidArgument, NoShadowError, UnreachableError
from .systems import (
    PeriodicWord,
    agreement_depth,
    as_point,
    iterate_point,
    orbit_segment,
    sft_shadow,
)

SIDECAR_THRESHOLD = 10**5
_BFS_ROWS = 256
_PULLBACK_LAPS = 3
_EXACT_JSON_BITS = 8192


# ---------------------------------------------------------------------------
# gluing constant


def _class_subgraph(graph: TransitionGraph, cls: ChainClass):
    boxes = np.asarray(cls.boxes, dtype=np.int64)
    pos = np.full(graph.n_boxes, -1, dtype=np.int64)
    pos[boxes] = np.arange(boxes.size)
    src, dst = graph.edges()
    keep = (pos[src] >= 0) & (pos[dst] >= 0)
    n = boxes.size
    return csr_matrix((np.ones(int(keep.sum())), (pos[src[keep]], pos[dst[keep]])), shape=(n, n)), boxes


def _bitset_eccentricity(n, src, dst, sources):
    """Largest shortest positive-length path length from ``sources``, by bit-parallel BFS.

    Each node holds one bit per source; a level ORs the frontier bits of all
    in-neighbours.  Returns inf if some source misses some node.
    """
    order = np.argsort(dst, kind="stable")
    s_sorted, d_sorted = src[order], dst[order]
    starts = np.searchsorted(d_sorted, np.arange(n))
    has_in = np.bincount(d_sorted, minlength=n) > 0
    words = (len(sources) + 63) // 64
    frontier = np.zeros((n, words), dtype=np.uint64)
    bit = np.arange(len(sources))
    frontier[sources, bit // 64] |= np.left_shift(np.uint64(1), (bit % 64).astype(np.uint64))
    full = np.zeros(words, dtype=np.uint64)
    np.bitwise_or.at(full, bit // 64, np.left_shift(np.uint64(1), (bit % 64).astype(np.uint64)))
    visited = np.zeros_like(frontier)
    level = 0
    deepest = 0
    while frontier.any():
        level += 1
        if d_sorted.size:
            nxt = np.bitwise_or.reduceat(frontier[s_sorted], np.minimum(starts, d_sorted.size - 1), axis=0)
            nxt[~has_in] = 0
        else:
            nxt = np.zeros_like(frontier)
        frontier = nxt & ~visited
        if frontier.any():
            visited |= frontier
            deepest = level
    if not (visited == full).all():
        return math.inf
    return deepest


def gluing_constant(graph: TransitionGraph, cls: ChainClass) -> int:
    """``M = max X_{i,j}`` over ordered box pairs of the class (diagonal included).

    ``X_{i,j}`` is the length of the shortest in-class box path from ``i`` to
    ``j`` with at least one edge, so ``X_{i,i}`` is the shortest cycle through ``i``.
    """
    if cls is None or len(cls) == 0:
        raise InvalidArgument("gluing constant of an empty class")
    key = ("M", cls.boxes)
    if key not in graph._cache:
        A, boxes = _class_subgraph(graph, cls)
        coo = A.tocoo()
        src, dst = coo.row.astype(np.int64), coo.col.astype(np.int64)
        n = boxes.size
        # keep the bit matrix near 64 MB
        per = max(64, min(n, (2**23 // max(n, 1)) * 64))
        M = 0
        for r in range(0, n, per):
            M = max(M, _bitset_eccentricity(n, src, dst, np.arange(r, min(n, r + per))))
        if not math.isfinite(M):
            raise InternalInconsistency("class is not strongly connected")
        graph._cache[key] = int(M)
    return graph._cache[key]


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True, eq=False)
class GluingSchedule:
    segments: tuple
    gaps: tuple
    epsilon: float
    gap_bound: int
    offsets: tuple = field(init=False)
    period: int = field(init=False)

    def __post_init__(self):
        if len(self.segments) != len(self.gaps) or not self.segments:
            raise InvalidArgument("schedule needs one gap per segment and at least one segment")
        offs = [0]
        for (_, n), m in zip(self.segments, self.gaps):
            offs.append(offs[-1] + int(n) + int(m))
        object.__setattr__(self, "offsets", tuple(offs))
        object.__setattr__(self, "period", offs[-1])

    @property
    def lengths(self):
        return tuple(int(n) for _, n in self.segments)

    def segment_start(self, i):
        """Position of ``x_i`` (0-based ``i``) in the pseudo-orbit: ``c_{i}`` in 0-based terms."""
        return self.offsets[i]

    def check(self):
        """Exact arithmetic checks: gap bound, offsets and period."""
        assert max(self.gaps) <= self.gap_bound
        assert self.offsets[0] == 0
        for i, ((_, n), m) in enumerate(zip(self.segments, self.gaps)):
            assert self.offsets[i + 1] == self.offsets[i] + n + m
        assert self.period == sum(n + m for (_, n), m in zip(self.segments, self.gaps))
        return True

    def to_json(self):
        return {
            "segments": [{"start": _point_json(x), "length": int(n)} for x, n in self.segments],
            "gaps": [int(m) for m in self.gaps],
            "epsilon": self.epsilon,
            "gap_bound": int(self.gap_bound),
            "offsets": list(self.offsets),
            "period": int(self.period),
        }


def _point_json(x):
    if isinstance(x, PeriodicWord):
        return {"periodic_word": list(x.block)}
    if isinstance(x, tuple) and x and isinstance(x[0], Fraction):
        out = {"float": [float(c) for c in x]}
        if max(c.denominator.bit_length() for c in x) <= _EXACT_JSON_BITS:
            out["exact"] = [f"{c.numerator}/{c.denominator}" for c in x]
        else:
            out["denominator_bits"] = max(c.denominator.bit_length() for c in x)
        return out
    arr = np.asarray(x)
    if np.issubdtype(arr.dtype, np.integer):
        return {"word": arr.tolist()}
    return {"float": arr.astype(float).tolist()}


def shadow_bound(graph: TransitionGraph):
    """Claimed shadowing accuracy for periodic pseudo-orbits realized from ``graph``.

    Subshifts: consecutive windows agree on ``K`` symbols, the spliced word
    agrees with each window on ``K + 1``, so deviation ``<= 2**-(K+1) < 2**-K``.
    Expanding maps: ``2 delta' / (lambda - 1)``.  Anything else: no guarantee.
    """
    system = graph.system
    if system.symbolic:
        K = min(graph.grid.depth - 1, agreement_depth(graph.delta))
        return math.ldexp(1.0, -K), True
    if system.is_expanding:
        return 2.0 * graph.effective_delta / (system.expansion - 1.0), True
    return math.inf, False


def glue_periodic_pseudo_orbit(graph: TransitionGraph, cls: ChainClass, segments, system=None):
    """Build the periodic pseudo-orbit of ``segments = [(x_i, n_i), ...]`` inside ``cls``."""
    system = graph.system if system is None else system
    segments = [(as_point(system, x), int(n)) for x, n in segments]
    if not segments:
        raise InvalidArgument("at least one segment is required")
    if any(n < 1 for _, n in segments):
        raise InvalidArgument("segment lengths must be >= 1")
    grid = graph.grid
    pieces, ends = [], []
    for idx, (x, n) in enumerate(segments):
        orb = orbit_segment(system, x, n + 1)
        boxes = grid.box_of(orb[[0, n]])
        for label, b in zip(("start", "end"), boxes.tolist()):
            if b not in cls:
                raise InvalidArgument(f"segment {idx} {label} point lies in box {b}, outside the class")
        pieces.append(orb[:n])
        ends.append(iterate_point(system, x, n))
    gaps, blocks = [], []
    k = len(segments)
    for i in range(k):
        nxt = segments[(i + 1) % k][0]
        try:
            chain = find_delta_chain(graph, ends[i], nxt, within=cls)
        except UnreachableError as exc:
            raise InternalInconsistency(f"no connector inside the class: {exc}") from exc
        connector = chain.points[:-1]
        gaps.append(connector.shape[0])
        blocks.append(pieces[i].astype(connector.dtype))
        blocks.append(connector)
    eps, _ = shadow_bound(graph)
    schedule = GluingSchedule(tuple(segments), tuple(gaps), eps, gluing_constant(graph, cls))
    pseudo = PseudoOrbit(np.concatenate(blocks), graph.effective_delta, periodic=True)
    return schedule, pseudo


# ---------------------------------------------------------------------------
# shadowing


@dataclass(eq=False)
class ShadowingCertificate:
    shadow: object
    period: int
    segment_deviations: list
    epsilon: float
    guaranteed: bool
    method: str

    @property
    def max_deviation(self):
        return max(self.segment_deviations) if self.segment_deviations else 0.0

    @property
    def holds(self):
        return self.max_deviation < self.epsilon

    def to_json(self):
        return {
            "shadow": _point_json(self.shadow),
            "period": self.period,
            "segment_deviations": list(self.segment_deviations),
            "max_deviation": self.max_deviation,
            "epsilon": self.epsilon if math.isfinite(self.epsilon) else None,
            "guaranteed": self.guaranteed,
            "holds": self.holds if self.guaranteed else None,
            "method": self.method,
        }


def segment_deviations(system, shadow, schedule: GluingSchedule, orbit=None):
    """``max_l d(f^{l + c_i}(shadow), f^l(x_i))`` per segment, by direct iteration of both orbits."""
    if orbit is None:
        orbit = orbit_segment(system, shadow, schedule.period)
    out = []
    for i, (x, n) in enumerate(schedule.segments):
        c = schedule.offsets[i]
        ref = orbit_segment(system, x, n)
        out.append(float(system.distance(orbit[c : c + n], ref).max()))
    return out


def _symbolic_shadow(system, pseudo: PseudoOrbit, depth_agreement):
    X = np.asarray(pseudo.points)
    if depth_agreement >= 1:
        return sft_shadow(system, X, pseudo.delta, periodic=True)
    z = PeriodicWord(tuple(X[:, 0].tolist()))
    if not system.is_admissible(z):
        raise NoShadowError("spliced first symbols do not form an admissible periodic word")
    return z


def _pullback(system, pseudo_points):
    """Periodic point whose orbit follows ``pseudo_points`` through nearest inverse branches.

    A float backward pass picks the branches; the closed orbit is then solved
    exactly: the composed branch is ``u -> A u + C`` with ``|A| < 1`` and the
    periodic point is ``C / (1 - A)``.
    """
    Y = np.asarray(pseudo_points, dtype=float)[:, 0]
    p = Y.size
    branches = system.inverse_branches
    a = np.array([float(b[0]) for b in branches])
    c = np.array([float(b[1]) for b in branches])
    u = Y[0]
    choice = np.zeros(p, dtype=np.int64)
    for _ in range(_PULLBACK_LAPS):
        for t in range(p - 1, -1, -1):
            cand = np.mod(a * u + c, 1.0)
            diff = np.abs(cand - Y[t])
            dist = np.minimum(diff, 1.0 - diff)
            j = int(np.argmin(dist))
            choice[t] = j
            u = cand[j]
    A, C = Fraction(1), Fraction(0)
    for t in range(p - 1, -1, -1):
        ba, bc = branches[choice[t]]
        A, C = ba * A, ba * C + bc
    z0 = (C / (1 - A)) % 1
    return (z0,)


def shadow_glued_orbit(pseudo: PseudoOrbit, schedule: GluingSchedule, system, graph=None, search_length=1000) -> ShadowingCertificate:
    """Shadow a periodic glued pseudo-orbit by a true periodic orbit and measure per-segment deviations."""
    if not pseudo.periodic:
        raise InvalidArgument("shadowing needs a periodic pseudo-orbit")
    if len(pseudo) != schedule.period:
        raise InvalidArgument("pseudo-orbit length does not match the schedule period")
    eps = schedule.epsilon
    if system.symbolic:
        K = agreement_depth(pseudo.delta)
        z = _symbolic_shadow(system, pseudo, K)
        devs = segment_deviations(system, z, schedule)
        return ShadowingCertificate(z, z.period, devs, eps, True, "symbolic_splice")
    if system.is_expanding and system.exact_step is not None:
        z = _pullback(system, pseudo.points)
        devs = segment_deviations(system, z, schedule)
        return ShadowingCertificate(z, schedule.period, devs, eps, True, "inverse_branch_pullback")
    # no constructive shadowing: scan a forward orbit for the best-aligned start
    x1 = schedule.segments[0][0]
    horizon = search_length + schedule.period
    orbit = orbit_segment(system, x1, horizon)
    best, best_dev = 0, math.inf
    for s in range(search_length):
        dev = max(segment_deviations(system, None, schedule, orbit=orbit[s : s + schedule.period]))
        if dev < best_dev:
            best, best_dev = s, dev
    z = iterate_point(system, x1, best)
    devs = segment_deviations(system, z, schedule)
    return ShadowingCertificate(z, schedule.period, devs, math.inf, False, "orbit_search")


def glue_and_shadow(graph: TransitionGraph, cls: ChainClass, segments):
    schedule, pseudo = glue_periodic_pseudo_orbit(graph, cls, segments)
    return schedule, pseudo, shadow_glued_orbit(pseudo, schedule, graph.system, graph)


# ---------------------------------------------------------------------------
# serialization


def glue_report(schedule, pseudo, cert, sidecar_path=None):
    """JSON-ready report; pseudo-orbits above ``SIDECAR_THRESHOLD`` points go to a float64 sidecar."""
    pts = np.asarray(pseudo.points)
    out = {
        "schedule": schedule.to_json(),
        "certificate": cert.to_json(),
        "pseudo_orbit": {"delta": pseudo.delta, "periodic": pseudo.periodic, "n_points": int(pts.shape[0]), "dimension": int(pts.shape[1])},
        "max_gap": int(max(schedule.gaps)),
    }
    if pts.shape[0] <= SIDECAR_THRESHOLD:
        out["pseudo_orbit"]["points"] = pts.tolist()
    else:
        if sidecar_path is None:
            raise InvalidArgument("pseudo-orbit too long for inline JSON and no sidecar path given")
        np.ascontiguousarray(pts, dtype="<f8").tofile(sidecar_path)
        out["pseudo_orbit"]["sidecar"] = str(getattr(sidecar_path, "name", sidecar_path))
        out["pseudo_orbit"]["sidecar_format"] = "little-endian float64, row-major (n_points, dimension)"
    return out
