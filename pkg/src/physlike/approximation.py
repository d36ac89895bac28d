"""Approximating a rational convex combination of ergodic measures by one periodic measure.

Given components ``(x_i, m_i)`` with Birkhoff-generic points ``x_i`` and integer
weights (``theta_i = m_i / m``), the construction

* picks ``L`` with ``2**-L < eps/5`` and ``delta`` from the family modulus at ``eps/5``,
* finds ``N`` with ``2 M / N < eps/5`` and every Birkhoff deviation ``< eps/5``,
* glues ``m_1`` copies of ``x_1``'s length-``N`` segment, then ``m_2`` of ``x_2``'s, ..,
* and shadows the periodic pseudo-orbit by a periodic point ``z``.

The five recorded budget terms are ``tail``, ``decomposition``, ``birkhoff``,
``gap`` (``2M/N``) and ``shadowing`` (measured).  On the normalized family the
achieved error of every observable is at most
``decomposition + birkhoff + shadowing + gap``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .chain import build_transition_graph, chain_recurrent_classes
from .errors import BudgetFailure, InvalidArgument, UnsupportedSystem
from .gluing import glue_periodic_pseudo_orbit, gluing_constant, shadow_bound, shadow_glued_orbit
from .measures import CylinderFamily, DiscreteMeasure, TrigFamily, default_family, tail_bound, weak_star_distance
from .systems import PeriodicWord, as_point, iter_orbits, orbit_segment, periodic_measure_points, point_array

MAX_TOTAL_LENGTH = 2**22
PROXY_FACTOR = 10
_PERIOD_PROBE = 4096
_DELTA_BOXES = 3
BUDGET_TERMS = ("tail", "decomposition", "birkhoff", "gap", "shadowing")


@dataclass(frozen=True, eq=False)
class Component:
    point: object
    weight: int
    reference: object = None  # DiscreteMeasure, "lebesgue", or None (auto)


@dataclass(frozen=True, eq=False)
class ErgodicPresentation:
    """``mu = sum_i (m_i / m) mu_i`` with each ``mu_i`` presented by a generic point."""

    components: tuple
    cls: object = None
    target: DiscreteMeasure | None = None

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(*c) for c in self.components)
        if not comps:
            raise InvalidArgument("presentation needs at least one component")
        weights = [c.weight for c in comps]
        if all(isinstance(w, int) and not isinstance(w, bool) for w in weights):
            if any(w < 1 for w in weights):
                raise InvalidArgument("integer weights m_i must be >= 1")
        else:
            fr = [Fraction(w) for w in weights]
            if sum(fr) != 1 or any(w <= 0 for w in fr):
                raise InvalidArgument("rational weights must be positive and sum to exactly 1")
            den = math.lcm(*(w.denominator for w in fr))
            comps = tuple(Component(c.point, int(w * den), c.reference) for c, w in zip(comps, fr))
        object.__setattr__(self, "components", comps)

    @property
    def multiplicities(self):
        return tuple(c.weight for c in self.components)

    @property
    def m(self):
        return sum(self.multiplicities)

    @property
    def thetas(self):
        return tuple(Fraction(w, self.m) for w in self.multiplicities)


def check_birkhoff_budget(system, x, N, family, reference):
    """``|(1/N) sum_{j<N} g(f^j x) - reference_g|`` for every normalized ``g`` in the family."""
    if N < 1:
        raise InvalidArgument("N must be >= 1")
    return np.abs(birkhoff_average(system, x, N, family) - np.asarray(reference, dtype=float)[: len(family)])


def birkhoff_average(system, x, N, family):
    """Normalized Birkhoff averages of the family along the first ``N`` points of the orbit of ``x``."""
    total = np.zeros(len(family))
    for chunk in iter_orbits(system, [x], N, chunk=8192):
        total += family.normalized(chunk[:, 0, :]).sum(axis=0)
    return total / N


def _normalized_moments(family, mu):
    return family.integrate(mu) / family.sup_norms


def component_reference(system, comp: Component, family):
    """Reference integrals of ``mu_i``: closed form when known, else ``None`` (proxy)."""
    ref = comp.reference
    if ref is None:
        x = as_point(system, comp.point)
        if isinstance(x, PeriodicWord) or (isinstance(x, tuple) and max(c.denominator for c in x) < 2**40):
            try:
                ref = periodic_measure_points(system, x, max_period=_PERIOD_PROBE)
            except InvalidArgument:
                ref = None
    if isinstance(ref, DiscreteMeasure):
        return _normalized_moments(family, ref), "closed_form"
    if isinstance(ref, str) and ref == "lebesgue":
        if not isinstance(family, TrigFamily):
            raise InvalidArgument("Lebesgue reference needs the trigonometric family")
        return family.lebesgue_moments() / family.sup_norms, "closed_form"
    if ref is None:
        return None, "proxy"
    raise InvalidArgument(f"cannot interpret reference {ref!r}")


def truncation_for(epsilon):
    """Smallest ``L`` with ``2**-L < epsilon / 5``."""
    L = 1
    while tail_bound(L) >= epsilon / 5:
        L += 1
    return L


def graph_for(system, delta_mod, delta_boxes=_DELTA_BOXES, max_boxes=None, seed=0, workers=1):
    """The coarsest graph whose shadowing bound is at most ``delta_mod``."""
    kwargs = {} if max_boxes is None else {"max_boxes": max_boxes}
    if system.symbolic:
        K = 1
        while math.ldexp(1.0, -K) > delta_mod:
            K += 1
        return build_transition_graph(system, K + 1, math.ldexp(1.0, -K), seed=seed, workers=workers, **kwargs)
    if not system.is_expanding:
        raise UnsupportedSystem(f"{system.name} has no constructive shadowing")
    lip = system.lipschitz_bound
    factor = 2.0 * (delta_boxes + 1.0 + lip) / (system.expansion - 1.0)
    depth = max(1, math.ceil(math.log2(factor / delta_mod)))
    while factor * math.ldexp(1.0, -depth) > delta_mod:
        depth += 1
    return build_transition_graph(system, depth, delta_boxes * math.ldexp(1.0, -depth), seed=seed, workers=workers, **kwargs)


def _host_class(graph, system, pres):
    boxes = [int(graph.grid.box_of(point_array(system, c.point).reshape(1, -1))[0]) for c in pres.components]
    if pres.cls is not None:
        cls = pres.cls
        if not all(b in cls for b in boxes):
            raise InvalidArgument("a component lies outside the given class")
        return cls
    for cls in chain_recurrent_classes(graph):
        if all(b in cls for b in boxes):
            return cls
    raise InvalidArgument(f"components (boxes {boxes}) do not share one chain recurrent class")


@dataclass(frozen=True, eq=False)
class ApproximationRun:
    epsilon: float
    L: int
    delta: float
    M_delta: int
    N: int
    schedule: object
    shadow: object
    period: int
    result: DiscreteMeasure
    target_moments: np.ndarray
    achieved_errors: np.ndarray
    budget_terms: dict
    weak_star: object
    family: object
    system: object
    presentation: ErgodicPresentation
    reference_kinds: tuple = ()
    proxy_length: int | None = None
    exact_errors: tuple | None = None
    certificate: object = None

    def to_json(self):
        out = {
            "epsilon": self.epsilon,
            "L": self.L,
            "delta": self.delta,
            "M_delta": self.M_delta,
            "N": self.N,
            "period": self.period,
            "mN": self.presentation.m * self.N,
            "budget_terms": dict(self.budget_terms),
            "achieved_errors": [float(e) for e in self.achieved_errors],
            "achieved_bound": 4 * self.epsilon / 5,
            "weak_star_distance": self.weak_star.to_json(),
            "references": list(self.reference_kinds),
            "proxy_length": self.proxy_length,
            "gaps": list(self.schedule.gaps),
        }
        if self.exact_errors is not None:
            out["achieved_errors_exact"] = [str(e) for e in self.exact_errors]
        if isinstance(self.shadow, PeriodicWord) and self.shadow.period <= 10**5:
            block = self.shadow.block
            out["shadow_word"] = "".join(map(str, block)) if max(block) < 10 else list(block)
        elif isinstance(self.shadow, tuple):
            out["shadow_point"] = [str(c) if len(str(c)) <= 4096 else float(c) for c in self.shadow]
        return out


def _period_measure(system, z, p):
    orbit = orbit_segment(system, z, p)
    return DiscreteMeasure(orbit, np.full(p, 1.0 / p), rational=(np.ones(p, dtype=np.int64), p))


def approximate_by_periodic_measure(
    presentation: ErgodicPresentation,
    epsilon,
    graph=None,
    system=None,
    family=None,
    max_total_length=MAX_TOTAL_LENGTH,
    seed=0,
    workers=1,
) -> ApproximationRun:
    if epsilon <= 0:
        raise InvalidArgument("epsilon must be positive")
    if system is None:
        if graph is None:
            raise InvalidArgument("need a system or a graph")
        system = graph.system
    pres = presentation
    L = truncation_for(epsilon)
    fam = default_family(system, L) if family is None else family
    if len(fam) < L:
        raise InvalidArgument(f"family has {len(fam)} members, the budget needs L = {L}")
    fam = fam.truncate(L)
    delta_mod = fam.modulus(epsilon / 5)

    if not system.symbolic and not system.is_expanding:
        raise UnsupportedSystem(f"{system.name} has no constructive shadowing")
    if graph is None:
        graph = graph_for(system, delta_mod, seed=seed, workers=workers)
    bound, _ = shadow_bound(graph)
    if bound > delta_mod:
        raise InvalidArgument(f"graph shadowing bound {bound} exceeds the modulus delta {delta_mod}; refine the grid")
    cls = _host_class(graph, system, pres)
    M = gluing_constant(graph, cls)
    m = pres.m

    refs, kinds = [], []
    for comp in pres.components:
        r, kind = component_reference(system, comp, fam)
        refs.append(r)
        kinds.append(kind)
    proxy_length = None

    N = math.ceil(10 * M / epsilon)
    if m * N > max_total_length:
        raise BudgetFailure("gap", f"starting N = {N} already exceeds the cap (m N <= {max_total_length}); gap budget 2M/N < eps/5 unreachable")
    while True:
        gap = 2 * M / N
        devs = []
        for comp, r in zip(pres.components, refs):
            if r is None:
                proxy_length = PROXY_FACTOR * N
                r_now = birkhoff_average(system, comp.point, proxy_length, fam)
            else:
                r_now = r
            devs.append(float(check_birkhoff_budget(system, comp.point, N, fam, r_now).max()))
        birk = max(devs)
        if gap < epsilon / 5 and birk < epsilon / 5:
            break
        failing = "gap" if gap >= epsilon / 5 else "birkhoff"
        detail = f"gap = {gap:.3g}" if failing == "gap" else f"component {int(np.argmax(devs))} deviates by {birk:.3g}"
        N *= 2
        if m * N > max_total_length:
            raise BudgetFailure(failing, f"N would exceed the cap (m N <= {max_total_length}); {failing} budget not met: {detail}")

    if proxy_length is not None:
        refs = [birkhoff_average(system, c.point, PROXY_FACTOR * N, fam) if r is None else r for c, r in zip(pres.components, refs)]
    thetas = pres.thetas
    target = sum(float(t) * np.asarray(r, dtype=float) for t, r in zip(thetas, refs))

    segments = []
    for comp in pres.components:
        segments.extend([(comp.point, N)] * comp.weight)
    schedule, pseudo = glue_periodic_pseudo_orbit(graph, cls, segments, system)
    cert = shadow_glued_orbit(pseudo, schedule, system, graph)
    z = cert.shadow
    p = schedule.period
    result = _period_measure(system, z, p)
    got = _normalized_moments(fam, result)
    errors = np.abs(got - target)

    exact = None
    if isinstance(fam, CylinderFamily) and all(k == "closed_form" for k in kinds):
        exact_target = [sum((t * v for t, v in zip(thetas, col)), Fraction(0)) for col in zip(*[_exact_ref(system, c, fam) for c in pres.components])]
        exact = tuple(abs(a - b) for a, b in zip(fam.integrate_exact(result), exact_target))
        errors = np.array([float(e) for e in exact])

    # shadowing term: normalized observable drift between pseudo-orbit and true orbit on segment times
    orbit = result.atoms
    seg_idx = np.concatenate([np.arange(schedule.offsets[i], schedule.offsets[i] + n) for i, (_, n) in enumerate(schedule.segments)])
    drift = np.abs(fam.normalized(orbit[seg_idx]) - fam.normalized(pseudo.points[seg_idx])).max()
    terms = {
        "tail": tail_bound(L),
        "decomposition": 0.0,
        "birkhoff": birk,
        "gap": gap,
        "shadowing": float(drift),
    }
    terms["recorded_sum"] = terms["decomposition"] + terms["birkhoff"] + terms["gap"] + terms["shadowing"]
    ws = weak_star_distance(target, got, _unit_family(fam), L)
    return ApproximationRun(
        epsilon=float(epsilon),
        L=L,
        delta=float(delta_mod),
        M_delta=M,
        N=N,
        schedule=schedule,
        shadow=z,
        period=p,
        result=result,
        target_moments=target,
        achieved_errors=errors,
        budget_terms=terms,
        weak_star=ws,
        family=fam,
        system=system,
        presentation=pres,
        reference_kinds=tuple(kinds),
        proxy_length=proxy_length,
        exact_errors=exact,
        certificate=cert,
    )


def _exact_ref(system, comp, fam):
    ref = comp.reference
    if ref is None:
        ref = periodic_measure_points(system, as_point(system, comp.point), max_period=_PERIOD_PROBE)
    return fam.integrate_exact(ref)


class _UnitNorms:
    """View of a family whose moment vectors are already normalized."""

    def __init__(self, fam):
        self._fam = fam
        self.dimension = fam.dimension
        self.sup_norms = np.ones(len(fam))

    def __len__(self):
        return len(self._fam)


def _unit_family(fam):
    return _UnitNorms(fam)


@dataclass
class ValidationReport:
    ok: bool
    failing_terms: list
    errors: np.ndarray
    weak_star: object
    epsilon: float

    def __bool__(self):
        return self.ok

    def to_json(self):
        return {
            "ok": self.ok,
            "failing_terms": list(self.failing_terms),
            "errors": [float(e) for e in self.errors],
            "weak_star_distance": self.weak_star.to_json(),
            "epsilon": self.epsilon,
        }


def validate_run(run: ApproximationRun, family=None, epsilon=None) -> ValidationReport:
    """Replay a run from its periodic point.

    Recomputes the length-``p`` orbit of ``run.shadow``, its empirical measure and
    every achieved error.  Fails on any budget term ``>= eps/5``, any achieved
    error ``>= 4 eps/5`` or a weak* distance (value plus tail) ``>= eps``.
    ``epsilon`` overrides the run's value for budget-bookkeeping replays.
    """
    eps = run.epsilon if epsilon is None else float(epsilon)
    fam = run.family if family is None else family.truncate(run.L)
    result = _period_measure(run.system, run.shadow, run.period)
    got = _normalized_moments(fam, result)
    errors = np.abs(got - run.target_moments)
    if isinstance(fam, CylinderFamily) and run.exact_errors is not None:
        pres = run.presentation
        exact_target = [
            sum((t * v for t, v in zip(pres.thetas, col)), Fraction(0))
            for col in zip(*[_exact_ref(run.system, c, fam) for c in pres.components])
        ]
        errors = np.array([float(abs(a - b)) for a, b in zip(fam.integrate_exact(result), exact_target)])
    failing = [t for t in BUDGET_TERMS if not run.budget_terms[t] < eps / 5]
    if not (errors < 4 * eps / 5).all():
        failing.append("achieved_error")
    ws = weak_star_distance(run.target_moments, got, _unit_family(fam), run.L)
    if not ws.upper_bound() < eps:
        failing.append("weak_star_distance")
    return ValidationReport(not failing, failing, errors, ws, eps)
