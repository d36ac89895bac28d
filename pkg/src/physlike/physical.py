"""Monte Carlo estimates of physical-like measures, point classification and the support-inclusion check.

Late empirical measures of random initial points are clustered greedily
under the truncated weak* distance.  Each cluster is a candidate physical-like
measure; its fraction of samples estimates the Lebesgue measure of its basin.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import make_grid
from .errors import InvalidArgument
from .measures import DiscreteMeasure, moment_distance
from .systems import iter_orbits, orbit_segment, point_array

SAMPLE_STREAM = 0x5A3D
SAMPLE_BLOCK = 64
DEFAULT_RADIUS = 0.05
DEFAULT_MASS_THRESHOLD = 0.01
N_CHECKPOINTS = 5


def default_checkpoints(orbit_length):
    """``ceil(T / 2**c)`` for ``c = 0..4``, increasing and deduplicated."""
    return sorted({math.ceil(orbit_length / 2**c) for c in range(N_CHECKPOINTS)})


def _check_checkpoints(checkpoints, orbit_length):
    cps = [int(c) for c in checkpoints]
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1 or cps[-1] > orbit_length:
        raise InvalidArgument("checkpoints must be increasing integers in [1, orbit_length]")
    return cps


def checkpoint_moments(system, family, points, checkpoints, time_chunk=4096):
    """``int g_n d Upsilon_c(x)`` for every point and checkpoint, shape ``(len(points), len(checkpoints), L)``."""
    cps = list(checkpoints)
    T = cps[-1]
    m = len(points)
    sums = np.zeros((m, len(family)))
    out = np.empty((m, len(cps), len(family)))
    t = 0
    k = 0
    for chunk in iter_orbits(system, points, T, chunk=time_chunk):
        length = chunk.shape[0]
        vals = family.evaluate(chunk.reshape(length * m, -1)).reshape(length, m, -1)
        while k < len(cps) and cps[k] <= t + length:
            upto = cps[k] - t
            out[:, k] = (sums + vals[:upto].sum(axis=0)) / cps[k]
            k += 1
        sums += vals.sum(axis=0)
        t += length
    return out


def sample_initial_points(system, n_samples, orbit_length, seed, start=0):
    """One generator per sample index, so the sample set is independent of scheduling."""
    rngs = [np.random.default_rng([int(seed), SAMPLE_STREAM, i]) for i in range(start, start + n_samples)]
    return system.sample_points(rngs, length=orbit_length)


def dedup_measure(orbit):
    """The empirical measure of ``orbit`` with equal atoms merged (same measure, fewer atoms)."""
    atoms, counts = np.unique(np.asarray(orbit), axis=0, return_counts=True)
    n = int(counts.sum())
    return DiscreteMeasure(atoms, counts / n, rational=(counts.astype(np.int64), n))


@dataclass(eq=False)
class MeasureCluster:
    id: int
    members: int
    lebesgue_fraction: float
    representative_moments: np.ndarray | None = None
    representative_point: object = None
    member_ids: tuple = ()
    _representative: DiscreteMeasure | None = None
    _system: object = None
    _length: int = 0

    @property
    def representative(self) -> DiscreteMeasure:
        """Late empirical measure of the first member, recomputed from its initial point."""
        if self._representative is None:
            self._representative = dedup_measure(orbit_segment(self._system, self.representative_point, self._length))
        return self._representative

    @classmethod
    def from_measure(cls, id, mu: DiscreteMeasure, members=1, lebesgue_fraction=0.0, family=None):
        mom = family.integrate(mu) if family is not None else None
        return cls(id, members, lebesgue_fraction, mom, None, (), mu)

    def to_json(self):
        return {
            "id": self.id,
            "members": self.members,
            "lebesgue_fraction": self.lebesgue_fraction,
            "representative_moments": None if self.representative_moments is None else [float(v) for v in self.representative_moments],
            "first_member": self.member_ids[0] if self.member_ids else None,
        }


@dataclass(eq=False)
class PhysicalLikeEstimate:
    clusters: list
    n_samples: int
    unclustered: int
    initial_points: list
    sample_cluster: np.ndarray  # cluster id per sample, -1 when unclustered
    final_moments: np.ndarray
    checkpoints: list
    radius: float
    sample_moments: np.ndarray = field(repr=False, default=None)

    @property
    def unclustered_fraction(self):
        return self.unclustered / self.n_samples

    def __iter__(self):
        return iter(self.clusters)

    def __len__(self):
        return len(self.clusters)

    def to_json(self):
        return {
            "n_samples": self.n_samples,
            "cluster_radius": self.radius,
            "checkpoints": list(self.checkpoints),
            "clusters": [c.to_json() for c in self.clusters],
            "unclustered": self.unclustered,
            "unclustered_fraction": self.unclustered_fraction,
        }


def _greedy_clusters(moments, family, radius):
    """First-seen greedy assignment: join the nearest cluster within ``radius`` (lowest id on ties)."""
    reps: list[np.ndarray] = []
    assign = np.empty(len(moments), dtype=np.int64)
    L = len(family)
    weights = 1.0 / (np.ldexp(1.0, np.arange(2, L + 2)) * family.sup_norms[:L])
    for i, mom in enumerate(moments):
        if reps:
            d = np.abs(np.asarray(reps) - mom) @ weights
            j = int(np.argmin(d))
            if d[j] < radius:
                assign[i] = j
                continue
        reps.append(mom)
        assign[i] = len(reps) - 1
    return assign


def estimate_physical_like_set(
    system,
    family,
    n_samples,
    orbit_length,
    checkpoints=None,
    cluster_radius=DEFAULT_RADIUS,
    seed=0,
    workers=1,
    min_cluster_size=1,
) -> PhysicalLikeEstimate:
    """Cluster the time-``T`` empirical measures of ``n_samples`` seeded random initial points."""
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    cps = default_checkpoints(orbit_length) if checkpoints is None else _check_checkpoints(checkpoints, orbit_length)
    points = sample_initial_points(system, n_samples, orbit_length, seed)
    blocks = [list(range(s, min(n_samples, s + SAMPLE_BLOCK))) for s in range(0, n_samples, SAMPLE_BLOCK)]
    job = lambda idx: checkpoint_moments(system, family, [points[i] for i in idx], cps)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, blocks))
    else:
        parts = [job(b) for b in blocks]
    moments = np.concatenate(parts, axis=0)
    final = moments[:, -1, :]
    assign = _greedy_clusters(final, family, cluster_radius)

    counts = np.bincount(assign)
    kept = [j for j in range(counts.size) if counts[j] >= min_cluster_size]
    renumber = {j: new for new, j in enumerate(kept)}
    clusters = []
    sample_cluster = np.full(n_samples, -1, dtype=np.int64)
    for j in kept:
        ids = np.flatnonzero(assign == j)
        sample_cluster[ids] = renumber[j]
        first = int(ids[0])
        clusters.append(
            MeasureCluster(
                id=renumber[j],
                members=int(ids.size),
                lebesgue_fraction=ids.size / n_samples,
                representative_moments=final[first],
                representative_point=points[first],
                member_ids=tuple(int(i) for i in ids),
                _system=system,
                _length=cps[-1],
            )
        )
    unclustered = int((sample_cluster < 0).sum())
    return PhysicalLikeEstimate(clusters, n_samples, unclustered, points, sample_cluster, final, cps, cluster_radius, moments)


# ---------------------------------------------------------------------------
# classification


@dataclass(eq=False)
class PointClassification:
    point: object
    diameter: float
    label: str
    strongly_regular: bool
    physically_typical: bool
    gamma_flag: bool
    nearest_cluster: int | None
    thresholds: dict

    @property
    def is_regular(self):
        return self.label == "regular"

    def to_json(self):
        return {
            "diameter": self.diameter,
            "class": self.label,
            "strongly_regular": self.strongly_regular,
            "physically_typical": self.physically_typical,
            "gamma_flag": self.gamma_flag,
            "nearest_cluster": self.nearest_cluster,
            "thresholds": dict(self.thresholds),
        }


def _pairwise_diameter(moms, family):
    d = 0.0
    for a in range(len(moms)):
        for b in range(a + 1, len(moms)):
            d = max(d, moment_distance(moms[a], moms[b], family))
    return d


def classify_points(
    system,
    family,
    points,
    checkpoints,
    clusters,
    thresholds=None,
    grid=None,
):
    """Regular/irregular by checkpoint diameter, plus the strongly-regular, typical and Gamma proxies.

    ``thresholds`` keys: ``radius`` (r, default 0.05), ``diameter`` (default 2r),
    ``mass_threshold`` (default 0.01).
    """
    th = dict(thresholds or {})
    r = float(th.get("radius", DEFAULT_RADIUS))
    th = {"radius": r, "diameter": float(th.get("diameter", 2 * r)), "mass_threshold": float(th.get("mass_threshold", DEFAULT_MASS_THRESHOLD))}
    cps = list(checkpoints)
    if grid is None:
        grid = make_grid(system, 4 if system.symbolic else 6)
    reps = [c.representative_moments if c.representative_moments is not None else family.integrate(c.representative) for c in clusters]
    out = []
    moments = checkpoint_moments(system, family, list(points), cps)
    for x, moms in zip(points, moments):
        diam = _pairwise_diameter(moms, family)
        label = "regular" if diam <= th["diameter"] else "irregular"
        near = []
        nearest = None
        for mom in moms:
            dists = [moment_distance(mom, rep, family) for rep in reps]
            near.append(any(d < r for d in dists))
        if reps:
            dists = [moment_distance(moms[-1], rep, family) for rep in reps]
            nearest = int(np.argmin(dists))
        typical = bool(near) and all(near)
        gamma = bool(near) and not any(near)
        strong = False
        if label == "regular":
            late = dedup_measure(orbit_segment(system, x, cps[-1]))
            x_box = int(grid.box_of(point_array(system, x).reshape(1, -1))[0])
            strong = x_box in support_boxes(late, grid, th["mass_threshold"])
        out.append(PointClassification(x, float(diam), label, bool(strong), typical, gamma, nearest, th))
    return out


# ---------------------------------------------------------------------------
# supports and the inclusion check


def box_masses(mu: DiscreteMeasure, grid):
    boxes = grid.box_of(mu.atoms)
    return np.bincount(boxes, weights=mu.weights, minlength=grid.n_boxes)


def support_boxes(mu: DiscreteMeasure, grid, mass_threshold=0.0):
    """Fewest boxes, by descending mass (ties by box id), carrying at least ``1 - mass_threshold``."""
    if not 0 <= mass_threshold < 1:
        raise InvalidArgument("mass_threshold must lie in [0, 1)")
    mass = box_masses(mu, grid)
    occupied = np.flatnonzero(mass > 0)
    if mass_threshold == 0:
        return set(occupied.tolist())
    order = occupied[np.lexsort((occupied, -mass[occupied]))]
    cum = np.cumsum(mass[order])
    need = 1.0 - mass_threshold
    k = int(np.searchsorted(cum, need - 1e-12)) + 1
    return set(order[: min(k, order.size)].tolist())


@dataclass
class InclusionReport:
    entries: list
    mass_threshold: float

    @property
    def passed(self):
        return all(e["contained"] for e in self.entries)

    @property
    def pass_rate(self):
        return sum(e["contained"] for e in self.entries) / len(self.entries) if self.entries else 1.0

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "pass_rate": self.pass_rate, "mass_threshold": self.mass_threshold, "clusters": self.entries}


def check_support_inclusion(clusters, classes, grid, mass_threshold=DEFAULT_MASS_THRESHOLD) -> InclusionReport:
    """Per cluster: does the support of the representative sit inside a single chain class?"""
    entries = []
    for c in clusters:
        supp = support_boxes(c.representative, grid, mass_threshold)
        host = None
        for cls in classes:
            if supp and supp <= cls.box_set:
                host = cls.id
                break
        entry = {"cluster_id": c.id, "support_size": len(supp), "contained": host is not None, "class_id": host}
        if host is None:
            touched = sorted({cls.id for cls in classes if supp & cls.box_set})
            entry["classes_touched"] = touched
            entry["boxes_outside_classes"] = len(supp - set().union(*(cls.box_set for cls in classes))) if classes else len(supp)
        entries.append(entry)
    return InclusionReport(entries, mass_threshold)
