"""Finitely supported probability measures and the weak* metric built from an observable family.

The metric is

    dist(mu, nu) = sum_n |int g_n dmu - int g_n dnu| / (2**(n+1) * ||g_n||)

truncated at level ``L``; the discarded tail is at most ``sum_{n>L} 2 / 2**(n+1) = 2**-L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument

WEIGHT_TOL = 1e-12
DEFAULT_TRUNCATION = 20


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """``sum_j weights[j] * delta_{atoms[j]}``.

    ``atoms`` has shape ``(n, d)``: float coordinates for torus points or int
    windows for symbolic points.  Duplicate atoms are kept.  ``rational``
    optionally carries exact weights as ``(numerators, denominator)``.
    """

    atoms: np.ndarray
    weights: np.ndarray
    rational: tuple | None = None

    def __post_init__(self):
        atoms = np.asarray(self.atoms)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise InvalidArgument("a measure needs a nonempty (n, d) atom array")
        if not np.issubdtype(atoms.dtype, np.integer):
            atoms = atoms.astype(float)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise InvalidArgument("atoms and weights differ in length")
        if (weights < 0).any():
            raise InvalidArgument("negative weight")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidArgument(f"weights sum to {weights.sum()!r}, not 1")
        if self.rational is not None:
            num, den = self.rational
            num = np.asarray(num)
            if num.shape != weights.shape or sum(int(v) for v in num) != int(den):
                raise InvalidArgument("rational weights are inconsistent")
            object.__setattr__(self, "rational", (num, int(den)))
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self):
        return self.atoms.shape[1]

    @property
    def is_symbolic(self):
        return np.issubdtype(self.atoms.dtype, np.integer)

    def __len__(self):
        return self.atoms.shape[0]

    def exact_weights(self):
        if self.rational is None:
            return [Fraction(w) for w in self.weights.tolist()]
        num, den = self.rational
        return [Fraction(int(v), den) for v in num]

    def to_json(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, data, symbolic=False):
        atoms = np.asarray(data["atoms"], dtype=np.int8 if symbolic else float)
        return cls(atoms, np.asarray(data["weights"], dtype=float))


def dirac(point) -> DiscreteMeasure:
    p = np.atleast_1d(np.asarray(point))
    return DiscreteMeasure(p.reshape(1, -1), np.ones(1), rational=(np.ones(1, dtype=np.int64), 1))


def empirical_measure(orbit, n) -> DiscreteMeasure:
    """``(1/n) sum_{j<n} delta_{orbit[j]}``."""
    orbit = np.asarray(orbit)
    if orbit.ndim == 1:
        orbit = orbit.reshape(-1, 1)
    if n <= 0 or orbit.shape[0] < n:
        raise InvalidArgument(f"need 1 <= n <= len(orbit), got n={n}, len={orbit.shape[0]}")
    return DiscreteMeasure(orbit[:n], np.full(n, 1.0 / n), rational=(np.ones(n, dtype=np.int64), n))


def convex_combination(components) -> DiscreteMeasure:
    """``sum_i theta_i mu_i`` for ``components = [(theta_i, mu_i), ...]``."""
    components = list(components)
    if not components:
        raise InvalidArgument("convex combination of nothing")
    thetas = [t for t, _ in components]
    if any(t < 0 for t in thetas):
        raise InvalidArgument("negative convex weight")
    total = sum(Fraction(t) for t in thetas)
    if abs(float(total) - 1.0) > WEIGHT_TOL:
        raise InvalidArgument(f"convex weights sum to {float(total)!r}, not 1")
    dims = {mu.dimension for _, mu in components}
    if len(dims) != 1:
        raise InvalidArgument("components live in different dimensions")
    atoms = np.concatenate([mu.atoms for _, mu in components])
    weights = np.concatenate([float(t) * mu.weights for t, mu in components])
    rational = None
    if all(isinstance(t, (int, Fraction)) and mu.rational is not None for t, mu in components):
        parts = [Fraction(t) / mu.rational[1] for t, mu in components]
        den = math.lcm(*(p.denominator for p in parts))
        num = np.concatenate(
            [np.array([int(v) * int(p * den) for v in mu.rational[0]], dtype=object) for p, (_, mu) in zip(parts, components)]
        )
        if den < 2**62:
            num = num.astype(np.int64)
        rational = (num, den)
    return DiscreteMeasure(atoms, weights, rational=rational)


def pushforward(mu: DiscreteMeasure, system) -> DiscreteMeasure:
    """Image measure ``f_* mu``: every atom moved by ``f``, weights unchanged."""
    if system.symbolic:
        raise InvalidArgument("pushforward is defined for map systems")
    if mu.dimension != system.dimension:
        raise InvalidArgument("measure and system dimensions differ")
    return DiscreteMeasure(system.step(mu.atoms), mu.weights, rational=mu.rational)


# ---------------------------------------------------------------------------
# observable families


class ObservableFamily:
    """An ordered finite family ``g_1..g_L`` of continuous observables.

    ``modulus(eps)`` returns a ``delta`` such that every normalized member
    ``g_n / ||g_n||`` varies by less than ``eps`` on pairs closer than ``delta``.
    """

    def __init__(self, dimension, functions: Sequence[Callable], sup_norms, modulus, labels=None):
        self.dimension = int(dimension)
        self.functions = tuple(functions)
        self.sup_norms = np.asarray(sup_norms, dtype=float)
        if self.sup_norms.shape != (len(self.functions),):
            raise InvalidArgument("one sup norm per function")
        if (self.sup_norms <= 0).any():
            raise InvalidArgument("sup norms must be positive")
        self._modulus = modulus
        self.labels = tuple(labels) if labels is not None else tuple(f"g{i + 1}" for i in range(len(self.functions)))

    def __len__(self):
        return len(self.functions)

    def modulus(self, eps):
        if eps <= 0:
            raise InvalidArgument("modulus needs eps > 0")
        return self._modulus(eps)

    def evaluate(self, points):
        """Raw values ``g_n(x)`` as an array of shape ``(len(points), L)``."""
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dimension)
        return np.column_stack([np.asarray(g(pts), dtype=float) for g in self.functions])

    def normalized(self, points):
        return self.evaluate(points) / self.sup_norms

    def integrate(self, mu: DiscreteMeasure):
        """``[int g_n dmu]`` for every member."""
        if mu.dimension != self.dimension:
            raise InvalidArgument(f"measure dimension {mu.dimension} != family dimension {self.dimension}")
        return mu.weights @ self.evaluate(mu.atoms)

    def truncate(self, L):
        if L > len(self):
            raise InvalidArgument(f"family has {len(self)} members, {L} requested")
        return ObservableFamily(self.dimension, self.functions[:L], self.sup_norms[:L], self._modulus_for(L), self.labels[:L])

    def _modulus_for(self, L):
        return self._modulus


class TrigFamily(ObservableFamily):
    """Real trigonometric monomials ``cos/sin(2 pi k.x)`` ordered by ``|k|_1``.

    The constant is excluded and each frequency ``k`` appears once (first nonzero
    coordinate positive), cosine before sine.  Every member has sup norm 1 and
    Lipschitz constant ``2 pi |k|_1`` in the max torus metric.
    """

    def __init__(self, dimension=1, size=DEFAULT_TRUNCATION):
        freqs = []
        total = 1
        while len(freqs) < size:
            for k in product(range(-total, total + 1), repeat=dimension):
                if sum(abs(c) for c in k) != total:
                    continue
                first = next(c for c in k if c != 0)
                if first < 0:
                    continue
                freqs.append((k, "cos"))
                freqs.append((k, "sin"))
            total += 1
        freqs = freqs[:size]
        self.frequencies = np.array([k for k, _ in freqs], dtype=np.int64).reshape(len(freqs), dimension)
        self.kinds = tuple(kind for _, kind in freqs)
        self.max_total_frequency = int(np.abs(self.frequencies).sum(axis=1).max())
        functions = [self._member(k, kind) for k, kind in freqs]
        labels = [f"{kind}(2pi*{list(k)}.x)" for k, kind in freqs]
        ktot = self.max_total_frequency
        super().__init__(dimension, functions, np.ones(len(freqs)), lambda eps: eps / (2 * math.pi * ktot), labels)

    @staticmethod
    def _member(k, kind):
        kv = np.asarray(k, dtype=float)
        trig = np.cos if kind == "cos" else np.sin
        return lambda x: trig(2 * np.pi * (np.asarray(x, dtype=float).reshape(-1, kv.size) @ kv))

    def evaluate(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        # e^{2 pi i k.x} from per-coordinate powers of e^{2 pi i x_c}
        base = np.exp(2j * np.pi * pts.T)  # (d, n)
        kmax = int(np.abs(self.frequencies).max())
        powers = np.empty((kmax + 1,) + base.shape, dtype=complex)
        powers[0] = 1.0
        for j in range(1, kmax + 1):
            np.multiply(powers[j - 1], base, out=powers[j])
        rows = np.empty((len(self), pts.shape[0]))
        cache = {}
        for j, (k, kind) in enumerate(zip(map(tuple, self.frequencies), self.kinds)):
            z = cache.get(k)
            if z is None:
                z = None
                for c, kc in enumerate(k):
                    if kc == 0:
                        continue
                    term = powers[kc, c] if kc > 0 else np.conj(powers[-kc, c])
                    z = term if z is None else z * term
                cache[k] = z
            rows[j] = z.real if kind == "cos" else z.imag
        return rows.T

    def truncate(self, L):
        if L > len(self):
            raise InvalidArgument(f"family has {len(self)} members, {L} requested")
        return TrigFamily(self.dimension, L)

    def lebesgue_moments(self):
        """Closed-form integrals against Lebesgue measure: zero for every nonconstant monomial."""
        return np.zeros(len(self))


class CylinderFamily(ObservableFamily):
    """Indicators of cylinder sets ``[w]`` of admissible words, by length then lexicographically.

    Locally constant, so the modulus is exact: two sequences closer than
    ``2**-(l-1)`` agree on their first ``l`` symbols, where ``l`` is the longest word.
    """

    def __init__(self, system, size=DEFAULT_TRUNCATION):
        k = system.alphabet_size
        words = []
        length = 1
        while len(words) < size:
            if length > system.window:
                raise InvalidArgument("window too short for the requested family size")
            for w in product(range(k), repeat=length):
                if system.is_admissible(w):
                    words.append(w)
            length += 1
        self.system = system
        self.words = tuple(words[:size])
        self.max_length = max(len(w) for w in self.words)
        lmax = self.max_length
        functions = [self._member(w) for w in self.words]
        labels = ["[" + "".join(map(str, w)) + "]" for w in self.words]
        super().__init__(system.window, functions, np.ones(len(self.words)), lambda eps: math.ldexp(1.0, -(lmax - 1)), labels)

    @staticmethod
    def _member(w):
        wv = np.asarray(w)
        return lambda x: (np.asarray(x)[:, : wv.size] == wv).all(axis=1).astype(float)

    def _hits(self, windows):
        X = np.asarray(windows).reshape(-1, self.dimension).astype(np.int64)
        k = self.system.alphabet_size
        codes = np.zeros(X.shape[0], dtype=np.int64)
        by_len = {}
        for length in range(1, self.max_length + 1):
            codes = codes * k + X[:, length - 1]
            by_len[length] = codes.copy()
        out = np.empty((X.shape[0], len(self.words)), dtype=bool)
        for j, w in enumerate(self.words):
            code = 0
            for s in w:
                code = code * k + s
            out[:, j] = by_len[len(w)] == code
        return out

    def evaluate(self, points):
        return self._hits(points).astype(float)

    def integrate_exact(self, mu: DiscreteMeasure):
        """Cylinder masses as Fractions (exact when ``mu`` carries rational weights)."""
        hits = self._hits(mu.atoms)
        w = mu.exact_weights()
        return [sum((w[i] for i in np.flatnonzero(hits[:, j])), Fraction(0)) for j in range(len(self.words))]

    def truncate(self, L):
        if L > len(self):
            raise InvalidArgument(f"family has {len(self)} members, {L} requested")
        return CylinderFamily(self.system, L)

    def markov_moments(self, pi, P):
        """Cylinder masses ``pi[w0] P[w0,w1] ...`` of a stationary Markov measure."""
        out = []
        for w in self.words:
            v = pi[w[0]]
            for a, b in zip(w[:-1], w[1:]):
                v *= P[a][b]
            out.append(float(v))
        return np.array(out)


def default_family(system, size=DEFAULT_TRUNCATION):
    if system.symbolic:
        return CylinderFamily(system, size)
    return TrigFamily(system.dimension, size)


# ---------------------------------------------------------------------------
# the metric


@dataclass(frozen=True)
class WeakStarDistance:
    value: float
    truncation_level: int
    tail_bound: float

    def upper_bound(self):
        """Bound on the distance under the untruncated metric."""
        return self.value + self.tail_bound

    def to_json(self):
        return {"value": self.value, "truncation_level": self.truncation_level, "tail_bound": self.tail_bound}


def tail_bound(L):
    """``sum_{n=L+1}^inf 2 / 2**(n+1)``, which equals ``2**-L``."""
    return math.ldexp(1.0, -L)


def _moments(m, family):
    if isinstance(m, DiscreteMeasure):
        return family.integrate(m)
    arr = np.asarray(m, dtype=float).ravel()
    if arr.shape[0] < len(family):
        raise InvalidArgument("moment vector shorter than the family")
    return arr[: len(family)]


def moment_distance(a, b, family, L=None):
    """Truncated weak* distance between two moment vectors ``[int g_n]``."""
    L = len(family) if L is None else L
    n = np.arange(1, L + 1)
    diff = np.abs(np.asarray(a[:L], dtype=float) - np.asarray(b[:L], dtype=float))
    return float(np.sum(diff / (np.ldexp(1.0, n + 1) * family.sup_norms[:L])))


def weak_star_distance(mu, nu, family: ObservableFamily, truncation_level=None) -> WeakStarDistance:
    """Truncated weak* distance; ``mu``/``nu`` are measures or precomputed moment vectors."""
    for m in (mu, nu):
        if isinstance(m, DiscreteMeasure) and m.dimension != family.dimension:
            raise InvalidArgument(f"measure dimension {m.dimension} != family dimension {family.dimension}")
    L = len(family) if truncation_level is None else int(truncation_level)
    if not 1 <= L <= len(family):
        raise InvalidArgument(f"truncation level must be in [1, {len(family)}]")
    value = moment_distance(_moments(mu, family), _moments(nu, family), family, L)
    return WeakStarDistance(value, L, tail_bound(L))
