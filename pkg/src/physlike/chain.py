"""Box discretization, delta-fattened transition graphs and chain recurrent classes."""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InvalidArgument, ResourceLimit, UnreachableError
from .systems import agreement_depth, iter_orbits, point_array

DEFAULT_MAX_BOXES = 2**18
DEFAULT_SAMPLES_PER_BOX = 32
GRAPH_CHUNK = 1024
_GRAPH_STREAM = 0x6772


class BoxGrid:
    """Dyadic partition of ``[0,1)^d`` into half-open cubes of side ``2**-depth``.

    Box ids are the C-order ravel of the integer index tuple, so id order is
    lexicographic order of the tuples.
    """

    symbolic = False

    def __init__(self, dimension, depth):
        if dimension < 1 or depth < 0:
            raise InvalidArgument("grid needs dimension >= 1 and depth >= 0")
        self.dimension = int(dimension)
        self.depth = int(depth)
        self.per_axis = 2**self.depth
        self.n_boxes = self.per_axis**self.dimension
        self.side = math.ldexp(1.0, -self.depth)

    @property
    def diameter(self):
        return self.side

    def box_of(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        idx = np.floor(np.mod(pts, 1.0) * self.per_axis).astype(np.int64)
        idx = np.clip(idx, 0, self.per_axis - 1)
        return np.ravel_multi_index(tuple(idx.T), (self.per_axis,) * self.dimension)

    def box_index(self, box):
        return tuple(int(i) for i in np.unravel_index(int(box), (self.per_axis,) * self.dimension))

    def box_id(self, index):
        return int(np.ravel_multi_index(tuple(index), (self.per_axis,) * self.dimension))

    def lower_corners(self, boxes):
        idx = np.stack(np.unravel_index(np.asarray(boxes), (self.per_axis,) * self.dimension), axis=-1)
        return idx * self.side

    def centers(self, boxes):
        return self.lower_corners(boxes) + 0.5 * self.side


class CylinderGrid:
    """Cylinders ``[w]`` of admissible words of length ``depth``, in lexicographic order.

    A cylinder has diameter ``2**-depth`` in the shift metric.  Its "center" is
    the canonical point ``w`` followed by the smallest admissible continuation.
    """

    symbolic = True

    def __init__(self, system, depth):
        if depth < 1:
            raise InvalidArgument("cylinder depth must be >= 1")
        if depth > system.window:
            raise InvalidArgument("cylinder depth exceeds the window")
        self.system = system
        self.depth = int(depth)
        self.dimension = system.window
        k = system.alphabet_size
        words = [(s,) for s in range(k)]
        for _ in range(depth - 1):
            words = [w + (s,) for w in words for s in np.flatnonzero(system.adjacency[w[-1]]).tolist()]
        self.words = np.array(words, dtype=np.int64).reshape(len(words), depth)
        self.n_boxes = len(words)
        self._codes = self._encode(self.words)
        self._order = np.argsort(self._codes)

    def _encode(self, words):
        k = self.system.alphabet_size
        code = np.zeros(words.shape[0], dtype=np.int64)
        for c in range(self.depth):
            code = code * k + words[:, c]
        return code

    @property
    def diameter(self):
        return math.ldexp(1.0, -self.depth)

    def box_of(self, windows):
        W = np.asarray(windows).reshape(-1, self.dimension)[:, : self.depth].astype(np.int64)
        codes = self._encode(W)
        pos = np.searchsorted(self._codes, codes)
        pos = np.clip(pos, 0, self.n_boxes - 1)
        if (self._codes[pos] != codes).any():
            raise InvalidArgument("window prefix is not an admissible word")
        return pos

    def box_index(self, box):
        return tuple(int(s) for s in self.words[int(box)])

    def box_id(self, index):
        return int(self.box_of(np.asarray(self.system.extend(index, self.dimension)).reshape(1, -1))[0])

    def centers(self, boxes):
        boxes = np.atleast_1d(np.asarray(boxes))
        return np.stack([self.system.extend(self.words[b], self.dimension) for b in boxes])


def make_grid(system, depth):
    return CylinderGrid(system, depth) if system.symbolic else BoxGrid(system.dimension, depth)


@dataclass(frozen=True)
class ChainClass:
    id: int
    boxes: tuple
    is_trivial: bool = False

    def __contains__(self, box):
        return int(box) in self.box_set

    @property
    def box_set(self):
        s = self.__dict__.get("_set")
        if s is None:
            s = frozenset(self.boxes)
            object.__setattr__(self, "_set", s)
        return s

    def __len__(self):
        return len(self.boxes)

    def to_json(self, graph=None):
        out = {"id": self.id, "boxes": [int(b) for b in self.boxes]}
        if graph is not None:
            out["internally_chain_transitive"] = is_internally_chain_transitive(graph, self.boxes)
        return out


@dataclass(frozen=True, eq=False)
class PseudoOrbit:
    """Points ``x_0..x_n`` with ``d(f(x_i), x_{i+1}) < delta`` (and ``d(f(x_n), x_0) < delta`` if periodic)."""

    points: np.ndarray
    delta: float
    periodic: bool = False

    def __len__(self):
        return self.points.shape[0]

    def jumps(self, system):
        pts = np.asarray(self.points)
        if self.periodic:
            return system.distance(system.step(pts), np.roll(pts, -1, axis=0))
        return system.distance(system.step(pts[:-1]), pts[1:])

    def is_valid(self, system):
        j = self.jumps(system)
        return bool((j < self.delta).all()) if j.size else True


@dataclass(eq=False)
class TransitionGraph:
    """Directed box graph; ``B -> B'`` when some sample ``x`` of ``B`` has
    ``d(f(x), center(B')) < delta + diameter/2`` (exact cylinder rule for subshifts).

    Adjacency is stored in CSR form with sorted rows.
    """

    system: object
    grid: object
    delta: float
    samples_per_box: int
    seed: int
    indptr: np.ndarray
    indices: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_boxes(self):
        return self.grid.n_boxes

    @property
    def n_edges(self):
        return int(self.indices.size)

    @property
    def effective_delta(self):
        """Jump bound for point sequences realized from box paths.

        Map systems: ``delta + (1 + Lip) * diameter`` (start anywhere in a box,
        land near a center, finish anywhere in the last box).  Symbolic: the
        ultrametric bound ``1.5 * 2**-min(depth-1, a)`` with ``2**-a < delta``.
        """
        if self.grid.symbolic:
            K = min(self.grid.depth - 1, agreement_depth(self.delta))
            return 1.5 * math.ldexp(1.0, -K)
        lip = self.system.lipschitz_bound or 1.0
        return self.delta + (1.0 + lip) * self.grid.diameter

    def successors(self, box):
        return self.indices[self.indptr[box] : self.indptr[box + 1]]

    def has_edge(self, a, b):
        row = self.successors(a)
        i = np.searchsorted(row, b)
        return bool(i < row.size and row[i] == b)

    def _transpose(self):
        if "t" not in self._cache:
            src = np.repeat(np.arange(self.n_boxes), np.diff(self.indptr))
            order = np.lexsort((src, self.indices))
            counts = np.bincount(self.indices, minlength=self.n_boxes)
            tptr = np.concatenate([[0], np.cumsum(counts)])
            self._cache["t"] = (tptr, src[order])
        return self._cache["t"]

    def predecessors(self, box):
        tptr, tind = self._transpose()
        return tind[tptr[box] : tptr[box + 1]]

    def edges(self):
        src = np.repeat(np.arange(self.n_boxes), np.diff(self.indptr))
        return src, self.indices.copy()

    def adjacency_lists(self):
        if "lists" not in self._cache:
            ptr = self.indptr.tolist()
            ind = self.indices.tolist()
            self._cache["lists"] = [ind[ptr[i] : ptr[i + 1]] for i in range(self.n_boxes)]
        return self._cache["lists"]

    def edges_csv(self):
        src, dst = self.edges()
        lines = ["src_box,dst_box"] + [f"{a},{b}" for a, b in zip(src.tolist(), dst.tolist())]
        return "\n".join(lines) + "\n"


def _csr(n, src, dst):
    code = np.unique(src.astype(np.int64) * n + dst.astype(np.int64))
    s = code // n
    d = code % n
    counts = np.bincount(s, minlength=n)
    return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64), d.astype(np.int64)


def box_samples(grid: BoxGrid, boxes, samples_per_box, seed, chunk_index):
    """Sample points for ``boxes``: center, the ``2**d`` corners, then seeded uniform points.

    The stream depends only on ``(seed, chunk_index)`` so samples are
    independent of how chunks are scheduled.  Shape ``(len(boxes), spb, d)``.
    """
    d = grid.dimension
    lower = grid.lower_corners(boxes)
    fixed = [np.full(d, 0.5)] + [np.array(c, dtype=float) for c in product((0.0, 1.0), repeat=d)]
    n_fixed = min(samples_per_box, len(fixed))
    rel = np.broadcast_to(np.array(fixed[:n_fixed]), (len(boxes), n_fixed, d))
    n_rand = samples_per_box - n_fixed
    if n_rand > 0:
        rng = np.random.default_rng([int(seed), _GRAPH_STREAM, int(chunk_index)])
        rel = np.concatenate([rel, rng.random((len(boxes), n_rand, d))], axis=1)
    return lower[:, None, :] + rel * grid.side


def _map_edges_chunk(system, grid, delta, samples_per_box, seed, chunk_index, boxes):
    samples = box_samples(grid, boxes, samples_per_box, seed, chunk_index)
    n_b, spb, d = samples.shape
    images = system.step(samples.reshape(-1, d))
    src = np.repeat(boxes, spb)
    radius = delta + 0.5 * grid.side
    n = grid.per_axis
    # candidate target index range per axis, filtered by the exact distance test below
    width = int(math.ceil(2 * radius / grid.side)) + 2
    lo = np.floor((images - radius) / grid.side - 0.5).astype(np.int64)
    offsets = np.arange(width)
    if width >= n:
        axis_cands = [np.broadcast_to(np.arange(n), (images.shape[0], n)) for _ in range(d)]
    else:
        axis_cands = [np.mod(lo[:, c : c + 1] + offsets, n) for c in range(d)]
    # per-axis circle distance from image to candidate centers
    axis_ok = []
    for c in range(d):
        centers = (axis_cands[c] + 0.5) * grid.side
        diff = np.mod(np.abs(images[:, c : c + 1] - centers), 1.0)
        axis_ok.append(np.minimum(diff, 1.0 - diff) < radius)
    # combine axes (max metric: every axis within radius)
    tgt = np.zeros((images.shape[0], 1), dtype=np.int64)
    ok = np.ones((images.shape[0], 1), dtype=bool)
    for c in range(d):
        tgt = (tgt[:, :, None] * n + axis_cands[c][:, None, :]).reshape(images.shape[0], -1)
        ok = (ok[:, :, None] & axis_ok[c][:, None, :]).reshape(images.shape[0], -1)
    rows, cols = np.nonzero(ok)
    return src[rows], tgt[rows, cols]


def _symbolic_edges(system, grid, delta):
    a = min(agreement_depth(delta), grid.depth)
    words = grid.words
    k = grid.depth
    src, dst = [], []
    if a == 0:
        n = grid.n_boxes
        return np.repeat(np.arange(n), n), np.tile(np.arange(n), n)
    if a <= k - 1:
        # shifted source prefix w[1:a+1] must equal target prefix w'[:a]
        index = {}
        for j, w in enumerate(words):
            index.setdefault(tuple(w[:a]), []).append(j)
        for i, w in enumerate(words):
            for j in index.get(tuple(w[1 : a + 1]), ()):
                src.append(i)
                dst.append(j)
    else:
        index = {}
        for j, w in enumerate(words):
            index.setdefault(tuple(w[: k - 1]), []).append(j)
        for i, w in enumerate(words):
            for j in index.get(tuple(w[1:]), ()):
                if system.adjacency[w[-1], words[j][-1]]:
                    src.append(i)
                    dst.append(j)
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def build_transition_graph(
    system,
    depth,
    delta,
    samples_per_box=DEFAULT_SAMPLES_PER_BOX,
    seed=0,
    max_boxes=DEFAULT_MAX_BOXES,
    workers=1,
) -> TransitionGraph:
    """Discretize the one-step delta-relation of ``system`` on a depth-``depth`` grid."""
    if delta <= 0:
        raise InvalidArgument("delta must be positive")
    if samples_per_box < 1:
        raise InvalidArgument("samples_per_box must be >= 1")
    if system.symbolic:
        if system.alphabet_size**depth > max_boxes:
            raise ResourceLimit(f"{system.alphabet_size}**{depth} cylinders exceed the budget of {max_boxes}")
    elif 2 ** (depth * system.dimension) > max_boxes:
        raise ResourceLimit(f"2**{depth * system.dimension} boxes exceed the budget of {max_boxes}")
    grid = make_grid(system, depth)
    if system.symbolic:
        src, dst = _symbolic_edges(system, grid, delta)
    else:
        chunks = [np.arange(s, min(grid.n_boxes, s + GRAPH_CHUNK)) for s in range(0, grid.n_boxes, GRAPH_CHUNK)]
        job = lambda ic: _map_edges_chunk(system, grid, delta, samples_per_box, seed, ic[0], ic[1])
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(job, enumerate(chunks)))
        else:
            parts = [job(ic) for ic in enumerate(chunks)]
        src = np.concatenate([p[0] for p in parts])
        dst = np.concatenate([p[1] for p in parts])
    indptr, indices = _csr(grid.n_boxes, src, dst)
    return TransitionGraph(system, grid, float(delta), int(samples_per_box), int(seed), indptr, indices)


def delta_for(depth, delta_boxes):
    """Convert a delta in box-diameter units to metric units."""
    return delta_boxes * math.ldexp(1.0, -depth)


# ---------------------------------------------------------------------------
# strongly connected components


def strongly_connected_components(adjacency):
    """Tarjan's algorithm, iterative.  ``adjacency[v]`` lists the successors of ``v``.

    Components come out in reverse topological order of the condensation.
    """
    n = len(adjacency)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack = []
    comps = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [(root, 0)]
        while work:
            v, pos = work[-1]
            succ = adjacency[v]
            if pos < len(succ):
                w = succ[pos]
                work[-1] = (v, pos + 1)
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def scc_decomposition(graph: TransitionGraph):
    """Nontrivial SCCs as ChainClasses (ids ordered by smallest box) and the list of trivial boxes."""
    if "scc" in graph._cache:
        return graph._cache["scc"]
    adj = graph.adjacency_lists()
    classes, trivial = [], []
    for comp in strongly_connected_components(adj):
        if len(comp) == 1 and comp[0] not in adj[comp[0]]:
            trivial.append(comp[0])
        else:
            classes.append(tuple(sorted(comp)))
    classes.sort(key=lambda c: c[0])
    result = ([ChainClass(i, c) for i, c in enumerate(classes)], sorted(trivial))
    graph._cache["scc"] = result
    return result


def chain_recurrent_classes(graph: TransitionGraph):
    """Maximal strongly connected components that contain a cycle (self-loops count)."""
    return scc_decomposition(graph)[0]


def class_of_box(graph, box):
    for c in chain_recurrent_classes(graph):
        if box in c:
            return c
    return None


def class_refinement(fine, coarse):
    """Map each class id of ``fine`` to the id of the unique ``coarse`` class containing it (None if none)."""
    out = {}
    for c in fine:
        hosts = {h.id for h in coarse if c.boxes[0] in h}
        host = hosts.pop() if len(hosts) == 1 else None
        if host is not None and not all(b in coarse[host] for b in c.boxes):
            host = None
        out[c.id] = host
    return out


# ---------------------------------------------------------------------------
# chains and chain transitivity


def _allowed_mask(graph, within):
    if within is None:
        return None
    mask = np.zeros(graph.n_boxes, dtype=bool)
    mask[np.fromiter((int(b) for b in (within.boxes if isinstance(within, ChainClass) else within)), dtype=np.int64)] = True
    return mask


def box_path(graph: TransitionGraph, src_box, dst_box, within=None):
    """Lexicographically smallest among the shortest box paths with at least one edge."""
    allowed = _allowed_mask(graph, within)
    if allowed is not None and not (allowed[src_box] and allowed[dst_box]):
        raise InvalidArgument("endpoints are outside the allowed box set")
    # reverse BFS: distance from each box to dst_box
    dist = np.full(graph.n_boxes, -1, dtype=np.int64)
    dist[dst_box] = 0
    queue = deque([dst_box])
    while queue:
        v = queue.popleft()
        for u in graph.predecessors(v).tolist():
            if dist[u] == -1 and (allowed is None or allowed[u]):
                dist[u] = dist[v] + 1
                queue.append(u)
    succ = [u for u in graph.successors(src_box).tolist() if dist[u] >= 0 and (allowed is None or allowed[u])]
    if not succ:
        raise UnreachableError(f"no delta-chain from box {src_box} to box {dst_box}")
    remaining = 1 + min(dist[u] for u in succ)
    path = [src_box]
    cur = src_box
    while remaining > 0:
        for u in graph.successors(cur).tolist():
            if dist[u] == remaining - 1 and (allowed is None or allowed[u]):
                path.append(u)
                cur = u
                break
        remaining -= 1
    return path


def find_delta_chain(graph: TransitionGraph, start, end, within=None) -> PseudoOrbit:
    """A delta'-chain from ``start`` to ``end`` following the shortest box path.

    Intermediate points are box centers; the endpoints are the given points.
    ``delta'`` is ``graph.effective_delta``.
    """
    system = graph.system
    a = point_array(system, start)
    b = point_array(system, end)
    sb = int(graph.grid.box_of(a.reshape(1, -1))[0])
    eb = int(graph.grid.box_of(b.reshape(1, -1))[0])
    path = box_path(graph, sb, eb, within)
    pts = [a]
    if len(path) > 2:
        pts.extend(graph.grid.centers(path[1:-1]))
    pts.append(b)
    dtype = np.int8 if system.symbolic else float
    return PseudoOrbit(np.stack([np.asarray(p, dtype=dtype) for p in pts]), graph.effective_delta, periodic=False)


def omega_limit_boxes(system, x0, grid, burn_in, n):
    """Boxes visited by ``f^burn_in(x0) .. f^(burn_in+n-1)(x0)``."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    out = set()
    t = 0
    for chunk in iter_orbits(system, [x0], burn_in + n):
        pts = chunk[:, 0, :]
        lo = max(0, burn_in - t)
        if lo < pts.shape[0]:
            out.update(grid.box_of(pts[lo:]).tolist())
        t += pts.shape[0]
    return out


def is_internally_chain_transitive(graph: TransitionGraph, boxes):
    """The subgraph induced on ``boxes`` is nonempty, strongly connected and has a cycle."""
    boxes = sorted({int(b) for b in boxes})
    if not boxes:
        return False
    pos = {b: i for i, b in enumerate(boxes)}
    adj = [[pos[u] for u in graph.successors(b).tolist() if u in pos] for b in boxes]
    comps = strongly_connected_components(adj)
    if len(comps) != 1:
        return False
    return len(boxes) > 1 or 0 in adj[0]
