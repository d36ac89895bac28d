"""Desk-scale dynamical systems: torus/interval maps and one-sided subshifts.

Points of a :class:`MapSystem` are coordinate vectors in ``[0, 1)^d``.  They may
be given either as floats or as exact rationals (``fractions.Fraction``).  For
the piecewise-linear integer maps (doubling, tent, cat) rational points are
iterated exactly on the lattice ``(1/q) Z^d``; floating point iteration of
those maps collapses every orbit onto ``0`` after ~53 steps.

Points of a :class:`SymbolicSystem` are one-sided sequences, represented either
as a finite 1-D integer array (long enough for the requested horizon) or as a
:class:`PeriodicWord`.  Orbits of symbolic points are returned as arrays of
length-``window`` windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InvalidArgument, NoShadowError

# Odd prime with 2 as a primitive root, so a/q has doubling period q - 1.
SAMPLE_DENOMINATOR = 1000000000000007243
_INT64_LIMIT = 2**61


def wrap(x):
    """Reduce coordinates into [0, 1); guards the ``-tiny % 1 == 1.0`` case."""
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


def torus_distance(a, b):
    """Max over coordinates of the circle distance ``min(|a-b|, 1-|a-b|)``."""
    diff = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), 1.0)
    return np.minimum(diff, 1.0 - diff).max(axis=-1)


def sequence_distance(a, b):
    """``2**-i`` with ``i`` the first disagreement, compared on the common prefix."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = min(a.shape[-1], b.shape[-1])
    neq = a[..., :n] != b[..., :n]
    first = np.argmax(neq, axis=-1)
    return np.where(neq.any(axis=-1), np.ldexp(1.0, -first), 0.0)


@dataclass(frozen=True, eq=False)
class MapSystem:
    """A continuous self-map of the torus ``[0,1)^d`` with the max torus metric."""

    name: str
    dimension: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float | None = None
    exact_step: Callable | None = None
    inverse_branches: tuple | None = None
    expansion: float | None = None
    params: dict = field(default_factory=dict)

    symbolic = False

    def step(self, points):
        return wrap(self.evaluate(np.asarray(points, dtype=float)))

    def distance(self, a, b):
        return torus_distance(a, b)

    @property
    def is_expanding(self):
        return self.inverse_branches is not None and self.expansion is not None

    def sample_points(self, rngs, length=None):
        """One uniformly random point per generator in ``rngs``.

        Lattice maps get exact rationals ``a / SAMPLE_DENOMINATOR``.
        """
        out = []
        for rng in rngs:
            if self.exact_step is not None:
                nums = rng.integers(0, SAMPLE_DENOMINATOR, size=self.dimension)
                out.append(tuple(Fraction(int(a), SAMPLE_DENOMINATOR) for a in nums))
            else:
                out.append(rng.random(self.dimension))
        return out


@dataclass(frozen=True)
class PeriodicWord:
    """The periodic sequence ``block block block ...``."""

    block: tuple

    def __post_init__(self):
        if len(self.block) == 0:
            raise InvalidArgument("periodic word needs a nonempty block")
        object.__setattr__(self, "block", tuple(int(s) for s in self.block))

    @property
    def period(self):
        return len(self.block)

    def sequence(self, length, start=0):
        idx = (np.arange(length) + start) % len(self.block)
        return np.asarray(self.block, dtype=np.int8)[idx]

    def shifted(self, t):
        t %= len(self.block)
        return PeriodicWord(self.block[t:] + self.block[:t])


@dataclass(frozen=True, eq=False)
class SymbolicSystem:
    """One-sided subshift of finite type with the metric ``2**-min{i: x_i != y_i}``."""

    adjacency: np.ndarray
    window: int = 64
    name: str = "sft"

    symbolic = True
    lipschitz_bound = 2.0

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.int64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise InvalidArgument("adjacency must be a nonempty square matrix")
        if not np.isin(A, (0, 1)).all():
            raise InvalidArgument("adjacency entries must be 0 or 1")
        if A.shape[0] > 127:
            raise InvalidArgument("alphabets above 127 symbols are not supported")
        if (A.sum(axis=1) == 0).any() or (A.sum(axis=0) == 0).any():
            raise InvalidArgument("adjacency has an all-zero row or column")
        if self.window < 2:
            raise InvalidArgument("window must be at least 2")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def alphabet_size(self):
        return self.adjacency.shape[0]

    @property
    def dimension(self):
        return self.window

    def step(self, windows):
        return np.asarray(windows)[..., 1:]

    def distance(self, a, b):
        return sequence_distance(a, b)

    def is_admissible(self, word, cyclic=False):
        w = np.asarray(word.block if isinstance(word, PeriodicWord) else word, dtype=np.int64)
        if isinstance(word, PeriodicWord):
            cyclic = True
        if w.size == 0:
            return True
        if w.min() < 0 or w.max() >= self.alphabet_size:
            return False
        ok = bool(self.adjacency[w[:-1], w[1:]].all())
        if cyclic:
            ok = ok and bool(self.adjacency[w[-1], w[0]])
        return ok

    def extend(self, word, length):
        """Extend ``word`` to ``length`` symbols by always taking the smallest allowed successor."""
        out = [int(s) for s in word]
        if not out:
            out = [0]
        while len(out) < length:
            out.append(int(np.flatnonzero(self.adjacency[out[-1]])[0]))
        return np.asarray(out[:length], dtype=np.int8)

    def transition_matrix(self):
        """Stochastic matrix used for random sampling (the Parry chain when irreducible)."""
        from .entropy import sampling_chain

        return sampling_chain(self)[1]

    def sample_points(self, rngs, length):
        """Random admissible sequences of ``length + window - 1`` symbols, one per generator.

        Sampled from the Parry (maximal entropy) Markov chain; for the full shift
        this is the uniform Bernoulli measure.
        """
        from .entropy import sampling_chain

        pi, P = sampling_chain(self)
        total = length + self.window - 1
        u = np.stack([rng.random(total) for rng in rngs]) if rngs else np.zeros((0, total))
        cum_pi = np.cumsum(pi)
        cum_P = np.cumsum(P, axis=1)
        k = self.alphabet_size
        seq = np.empty(u.shape, dtype=np.int8)
        cur = np.minimum(np.searchsorted(cum_pi, u[:, 0], side="right"), k - 1)
        seq[:, 0] = cur
        for t in range(1, total):
            rows = cum_P[cur]
            cur = np.minimum((rows <= u[:, t : t + 1]).sum(axis=1), k - 1)
            seq[:, t] = cur
        return list(seq)


# ---------------------------------------------------------------------------
# point handling and orbits


def is_rational_point(x):
    if isinstance(x, (Rational,)) and not isinstance(x, bool):
        return True
    if isinstance(x, (tuple, list)) and x and all(isinstance(c, Rational) and not isinstance(c, bool) for c in x):
        return True
    return False


def _rational_tuple(x):
    if isinstance(x, Rational):
        return (Fraction(x),)
    return tuple(Fraction(c) for c in x)


def as_point(system, x):
    """Normalize ``x`` to the representation used by ``system``.

    Returns a tuple of Fractions (exact lattice maps), a float vector, a
    PeriodicWord or an int8 sequence array.
    """
    if system.symbolic:
        if isinstance(x, PeriodicWord):
            return x
        seq = np.asarray(x, dtype=np.int64)
        if seq.ndim != 1 or seq.size == 0:
            raise InvalidArgument("symbolic points are 1-D symbol sequences")
        return seq.astype(np.int8)
    if system.exact_step is not None and is_rational_point(x):
        pt = tuple(c % 1 for c in _rational_tuple(x))
        if len(pt) != system.dimension:
            raise InvalidArgument(f"point has dimension {len(pt)}, system has {system.dimension}")
        return pt
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (system.dimension,):
        raise InvalidArgument(f"point has shape {arr.shape}, system has dimension {system.dimension}")
    return wrap(arr)


def point_array(system, x):
    """The phase-space coordinates of a point: float vector, or a length-``window`` window."""
    x = as_point(system, x)
    if system.symbolic:
        if isinstance(x, PeriodicWord):
            return x.sequence(system.window)
        if x.size < system.window:
            raise InvalidArgument(f"sequence shorter than the window {system.window}")
        return x[: system.window]
    if isinstance(x, tuple):
        return np.array([float(c) for c in x])
    return np.asarray(x, dtype=float)


def _symbolic_sequences(system, points, n):
    need = n + system.window - 1
    seqs = []
    for p in points:
        if isinstance(p, PeriodicWord):
            seqs.append(p.sequence(need))
        else:
            if p.size < need:
                raise InvalidArgument(
                    f"sequence of length {p.size} too short for {n} orbit points (need {need})"
                )
            seqs.append(p[:need])
    return np.stack(seqs)


def iter_orbits(system, points, n, chunk=4096) -> Iterator[np.ndarray]:
    """Yield the orbits of ``points`` in time chunks of shape ``(len, m, dim)``.

    The concatenation along axis 0 is ``[x, f(x), ..., f^{n-1}(x)]`` for every point.
    """
    points = [as_point(system, p) for p in points]
    m = len(points)
    if n <= 0 or m == 0:
        return
    if system.symbolic:
        seqs = _symbolic_sequences(system, points, n)
        W = system.window
        for t0 in range(0, n, chunk):
            t1 = min(n, t0 + chunk)
            block = np.lib.stride_tricks.sliding_window_view(seqs[:, t0 : t1 + W - 1], W, axis=1)
            yield np.ascontiguousarray(block.transpose(1, 0, 2))
        return

    rational = [isinstance(p, tuple) for p in points]
    if any(rational) and not all(rational):
        # mixed inputs: iterate each group separately to keep exactness
        parts = [list(iter_orbits(system, [p], n, chunk)) for p in points]
        for pieces in zip(*parts):
            yield np.concatenate(pieces, axis=1)
        return

    if all(rational) and system.exact_step is not None:
        d = system.dimension
        dens = [math.lcm(*(c.denominator for c in p)) for p in points]
        big = max(dens) >= _INT64_LIMIT
        dtype = object if big else np.int64
        q = np.array(dens, dtype=dtype).reshape(m, 1)
        num = np.array(
            [[int(c * den) for c in p] for p, den in zip(points, dens)], dtype=dtype
        ).reshape(m, d)
        qf = None if big else q.astype(float)
        for t0 in range(0, n, chunk):
            t1 = min(n, t0 + chunk)
            out = np.empty((t1 - t0, m, d))
            for t in range(t1 - t0):
                if big:
                    out[t] = [[a / b for a in row] for row, b in zip(num.tolist(), q.ravel().tolist())]
                else:
                    out[t] = num / qf
                num = system.exact_step(num, q)
            yield out
        return

    x = np.stack([np.asarray(p, dtype=float) for p in points])
    for t0 in range(0, n, chunk):
        t1 = min(n, t0 + chunk)
        out = np.empty((t1 - t0, m, system.dimension))
        for t in range(t1 - t0):
            out[t] = x
            x = system.step(x)
        yield out


def orbit_segment(system, x0, n):
    """``[x0, f(x0), ..., f^{n-1}(x0)]`` as an array of shape ``(n, dim)``."""
    if n <= 0:
        raise InvalidArgument("orbit length must be positive")
    return np.concatenate([c[:, 0, :] for c in iter_orbits(system, [x0], n)], axis=0)


def iterate_point(system, x, n):
    """``f^n(x)`` in the same representation as ``x`` (exact when possible)."""
    x = as_point(system, x)
    if n == 0:
        return x
    if system.symbolic:
        if isinstance(x, PeriodicWord):
            return x.shifted(n)
        if x.size < n + 1:
            raise InvalidArgument("sequence too short to shift")
        return x[n:]
    if isinstance(x, tuple):
        den = math.lcm(*(c.denominator for c in x))
        num = np.array([int(c * den) for c in x], dtype=object).reshape(1, -1)
        q = np.array([[den]], dtype=object)
        for _ in range(n):
            num = system.exact_step(num, q)
        return tuple(Fraction(int(a), den) for a in num[0])
    y = np.asarray(x, dtype=float)
    for _ in range(n):
        y = system.step(y)
    return y


def periodic_measure_points(system, x, max_period=10**6):
    """Orbit points of a periodic point (exact detection of the period)."""
    from .measures import DiscreteMeasure

    x = as_point(system, x)
    if system.symbolic:
        if not isinstance(x, PeriodicWord):
            raise InvalidArgument("symbolic periodic points must be PeriodicWord")
        p = x.period
        orbit = orbit_segment(system, x, p)
        return DiscreteMeasure(orbit, np.full(p, 1.0 / p), rational=(np.ones(p, dtype=np.int64), p))
    if not isinstance(x, tuple):
        raise InvalidArgument("periodic points of map systems must be exact rationals")
    y = x
    for p in range(1, max_period + 1):
        y = iterate_point(system, y, 1)
        if y == x:
            orbit = orbit_segment(system, x, p)
            return DiscreteMeasure(orbit, np.full(p, 1.0 / p), rational=(np.ones(p, dtype=np.int64), p))
    raise InvalidArgument(f"no period found up to {max_period}")


# ---------------------------------------------------------------------------
# symbolic shadowing


def agreement_depth(delta):
    """Smallest ``a`` with ``2**-a < delta``: a distance below delta means ``a`` agreeing symbols."""
    if delta <= 0:
        raise InvalidArgument("delta must be positive")
    a = 0
    while math.ldexp(1.0, -a) >= delta:
        a += 1
    return a


def sft_shadow(system: SymbolicSystem, pseudo_orbit, delta, periodic=False):
    """Exact shadowing of a symbolic delta-pseudo-orbit.

    ``pseudo_orbit`` is a sequence of windows ``x_0..x_n``.  The shadow is the word
    spelled by the first symbols of the ``x_i`` (followed by the tail of ``x_n``
    for non-periodic input); with ``periodic=True`` a :class:`PeriodicWord` is
    returned.  The orbit of the shadow agrees with ``x_i`` on at least ``a + 1``
    symbols where ``2**-a < delta``, so it is ``2**-(a+1)``-close.
    """
    X = np.asarray(pseudo_orbit, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("pseudo-orbit must be a nonempty list of words")
    for w in X:
        if not system.is_admissible(w):
            raise InvalidArgument(f"word {w.tolist()} is not admissible")
    a = agreement_depth(delta)
    if a < 1:
        raise NoShadowError("delta >= 1 does not force consecutive words to overlap")
    nxt = np.roll(X, -1, axis=0) if periodic else X[1:]
    cur = X if periodic else X[:-1]
    jumps = sequence_distance(cur[:, 1:], nxt)
    if (jumps >= delta).any():
        i = int(np.argmax(jumps >= delta))
        raise NoShadowError(f"overlap between entries {i} and {i + 1} is incompatible with delta={delta}")
    if periodic:
        z = PeriodicWord(tuple(X[:, 0]))
        if not system.is_admissible(z):
            raise NoShadowError("spliced periodic word is not admissible")
        return z
    word = np.concatenate([X[:-1, 0], X[-1]]).astype(np.int8)
    if not system.is_admissible(word):
        raise NoShadowError("spliced word is not admissible")
    return word


# ---------------------------------------------------------------------------
# built-in zoo


def _doubling_exact(num, q):
    return (2 * num) % q


def _tent_exact(num, q):
    two = 2 * num
    return np.where(two < q, two, 2 * q - two)


def _cat_exact(num, q):
    a = num[..., 0:1]
    b = num[..., 1:2]
    return np.concatenate([(2 * a + b) % q, (a + b) % q], axis=-1)


def doubling():
    return MapSystem(
        name="doubling",
        dimension=1,
        evaluate=lambda x: 2.0 * x,
        lipschitz_bound=2.0,
        exact_step=_doubling_exact,
        inverse_branches=((Fraction(1, 2), Fraction(0)), (Fraction(1, 2), Fraction(1, 2))),
        expansion=2.0,
    )


def tent():
    return MapSystem(
        name="tent",
        dimension=1,
        evaluate=lambda x: 1.0 - np.abs(2.0 * x - 1.0),
        lipschitz_bound=2.0,
        exact_step=_tent_exact,
        inverse_branches=((Fraction(1, 2), Fraction(0)), (Fraction(-1, 2), Fraction(1))),
        expansion=2.0,
    )


def identity(dimension=1):
    return MapSystem(
        name="identity",
        dimension=dimension,
        evaluate=lambda x: x,
        lipschitz_bound=1.0,
        exact_step=lambda num, q: num,
        params={"dimension": dimension},
    )


def north_south(param=0.1):
    """Circle map ``x - param*sin(2 pi x)``: sink at 0, source at 1/2."""
    if not 0 < param < 1 / (2 * math.pi):
        raise InvalidArgument("north-south parameter must lie in (0, 1/(2 pi))")
    return MapSystem(
        name="north_south",
        dimension=1,
        evaluate=lambda x: x - param * np.sin(2.0 * np.pi * x),
        lipschitz_bound=1.0 + 2.0 * math.pi * param,
        params={"param": param},
    )


def cat_map():
    """The toral automorphism ``[[2, 1], [1, 1]]`` reduced mod 1."""
    M = np.array([[2.0, 1.0], [1.0, 1.0]])
    return MapSystem(
        name="cat",
        dimension=2,
        evaluate=lambda x: x @ M.T,
        lipschitz_bound=3.0,
        exact_step=_cat_exact,
    )


def sft(adjacency, window=64, name="sft"):
    try:
        A = np.asarray(adjacency, dtype=np.int64)
    except (ValueError, TypeError) as exc:
        raise InvalidArgument(f"adjacency is not a square integer matrix: {exc}") from exc
    return SymbolicSystem(A, window=window, name=name)


def full_shift(k=2, window=64):
    return SymbolicSystem(np.ones((k, k), dtype=np.int64), window=window, name="full_shift")


def golden_mean(window=64):
    return SymbolicSystem(np.array([[1, 1], [1, 0]]), window=window, name="golden_mean")


BUILTINS = {
    "doubling": doubling,
    "north_south": north_south,
    "tent": tent,
    "identity": identity,
    "cat": cat_map,
    "full_shift": full_shift,
    "golden_mean": golden_mean,
}


def system_from_config(spec: dict):
    """Build a system from ``{"name": ..., "param": r, "adjacency": [[...]]}``."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise InvalidArgument("system spec needs a 'name'")
    name = spec["name"]
    if name == "sft":
        if "adjacency" not in spec:
            raise InvalidArgument("sft system needs an 'adjacency' matrix")
        return sft(spec["adjacency"], window=int(spec.get("window", 64)))
    if name == "north_south":
        return north_south(float(spec.get("param", 0.1)))
    if name == "identity":
        return identity(int(spec.get("dimension", 1)))
    if name in ("full_shift", "golden_mean"):
        kwargs = {"window": int(spec.get("window", 64))}
        if name == "full_shift" and "param" in spec:
            kwargs["k"] = int(spec["param"])
        return BUILTINS[name](**kwargs)
    if name in BUILTINS:
        return BUILTINS[name]()
    raise InvalidArgument(f"unknown system {name!r}")


def zoo() -> Sequence:
    """Every built-in instance, in a fixed order."""
    return [doubling(), north_south(), tent(), identity(), cat_map(), full_shift(), golden_mean()]
