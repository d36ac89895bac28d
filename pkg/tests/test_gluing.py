import json
from fractions import Fraction

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from conftest import cached_graph, graph_of
from physlike.chain import chain_recurrent_classes
from physlike.errors import InvalidArgument
from physlike.gluing import (
    GluingSchedule,
    glue_and_shadow,
    glue_periodic_pseudo_orbit,
    glue_report,
    gluing_constant,
    shadow_bound,
    shadow_glued_orbit,
)
from physlike.systems import PeriodicWord, doubling, full_shift, golden_mean, orbit_segment, sft


def oracle_M(graph, cls):
    """max over ordered pairs of the shortest positive-length in-class path (scipy)."""
    boxes = sorted(cls.boxes)
    pos = {b: i for i, b in enumerate(boxes)}
    n = len(boxes)
    A = np.zeros((n, n))
    for b in boxes:
        for u in graph.successors(b).tolist():
            if u in pos:
                A[pos[b], pos[u]] = 1
    D = shortest_path(csr_matrix(A), unweighted=True)
    X = np.full((n, n), np.inf)
    for i in range(n):
        for j in np.flatnonzero(A[i]):
            X[i] = np.minimum(X[i], 1 + D[j])
    return int(X.max())


def direct_deviations(system, z, schedule):
    orbit = orbit_segment(system, z, schedule.period)
    out = []
    for i, (x, n) in enumerate(schedule.segments):
        c = schedule.offsets[i]
        ref = orbit_segment(system, x, n)
        out.append(max(float(system.distance(orbit[c + l], ref[l])) for l in range(n)))
    return out


def test_M_single_loop():
    g = graph_of(sft([[1]]), 1, 3)
    (cls,) = chain_recurrent_classes(g)
    assert gluing_constant(g, cls) == 1


def test_M_symbol_level_graphs():
    g = graph_of(full_shift(), 1, 1)
    assert gluing_constant(g, chain_recurrent_classes(g)[0]) == 1
    g = graph_of(golden_mean(), 1, 1)
    (cls,) = chain_recurrent_classes(g)
    assert gluing_constant(g, cls) == 2 == oracle_M(g, cls)


@pytest.mark.parametrize("name,depth,db", [("doubling", 6, 3), ("north_south", 7, 2), ("golden_mean", 5, 3), ("cat", 4, 3)])
def test_M_matches_scipy(name, depth, db):
    g = cached_graph(name, depth, db)
    for cls in chain_recurrent_classes(g):
        assert gluing_constant(g, cls) == oracle_M(g, cls)


def test_fixed_point_segment():
    g = cached_graph("full_shift", 4, 3)
    (cls,) = chain_recurrent_classes(g)
    schedule, pseudo = glue_periodic_pseudo_orbit(g, cls, [(PeriodicWord((0,)), 1)])
    assert schedule.gaps == (1,)
    assert schedule.period == 2
    assert pseudo.is_valid(full_shift())
    cert = shadow_glued_orbit(pseudo, schedule, full_shift(), g)
    assert cert.max_deviation == 0.0


def test_full_shift_two_blocks():
    N = 10
    g = graph_of(full_shift(), 1, 1)
    (cls,) = chain_recurrent_classes(g)
    schedule, pseudo, cert = glue_and_shadow(g, cls, [(PeriodicWord((0,)), N), (PeriodicWord((1,)), N)])
    assert schedule.gaps == (1, 1)
    block = cert.shadow.block
    assert block == (0,) * (N + 1) + (1,) * (N + 1)


def test_doubling_seeded_segments_recheck(doubling_graph):
    g = doubling_graph
    (cls,) = chain_recurrent_classes(g)
    f = doubling()
    pts = f.sample_points([np.random.default_rng([9, i]) for i in range(2)])
    schedule, pseudo = glue_periodic_pseudo_orbit(g, cls, [(pts[0], 17), (pts[1], 9)])
    P = np.asarray(pseudo.points)
    jumps = [float(f.distance(f.step(P[i : i + 1]), P[(i + 1) % len(P)][None])[0]) for i in range(len(P))]
    assert max(jumps) < g.effective_delta
    assert schedule.check()


def test_true_periodic_orbit_has_zero_deviation():
    g = graph_of(golden_mean(), 4, 3)
    (cls,) = chain_recurrent_classes(g)
    z = PeriodicWord((0, 1, 0))
    seq_len = 3
    pseudo_pts = orbit_segment(golden_mean(), z, seq_len)
    from physlike.chain import PseudoOrbit

    pseudo = PseudoOrbit(pseudo_pts, g.effective_delta, periodic=True)
    eps, _ = shadow_bound(g)
    sched = GluingSchedule(((z, 3),), (0,), eps, gluing_constant(g, cls))
    cert = shadow_glued_orbit(pseudo, sched, golden_mean(), g)
    assert cert.max_deviation == 0.0


def test_golden_mean_deviation_bound():
    depth = 5
    g = graph_of(golden_mean(), depth, 3)
    (cls,) = chain_recurrent_classes(g)
    gm = golden_mean()
    segs = [(x, 7) for x in gm.sample_points([np.random.default_rng([4, i]) for i in range(3)], length=8)]
    schedule, pseudo, cert = glue_and_shadow(g, cls, segs)
    # delta' = 1.5 * 2^-K and consecutive windows agree on K symbols
    K = round(-np.log2(pseudo.delta / 1.5))
    assert max(direct_deviations(gm, cert.shadow, schedule)) <= 2.0 ** -(K + 1)
    assert gm.is_admissible(cert.shadow)


def test_doubling_pullback_periodic_and_close(doubling_graph):
    g = doubling_graph
    (cls,) = chain_recurrent_classes(g)
    f = doubling()
    segs = [(x, 11) for x in f.sample_points([np.random.default_rng([2, i]) for i in range(3)])]
    schedule, pseudo, cert = glue_and_shadow(g, cls, segs)
    z = cert.shadow
    assert isinstance(z[0], Fraction)
    # exactly periodic
    from physlike.systems import iterate_point

    assert iterate_point(f, z, schedule.period) == z
    orbit = orbit_segment(f, z, schedule.period)
    dev = f.distance(orbit, np.asarray(pseudo.points)).max()
    assert dev < 2 * pseudo.delta / (2 - 1)


def test_segment_outside_class(north_south_graph):
    g = north_south_graph
    classes = chain_recurrent_classes(g)
    sink_cls = [c for c in classes if int(g.grid.box_of(np.array([[0.0]]))[0]) in c][0]
    with pytest.raises(InvalidArgument):
        glue_periodic_pseudo_orbit(g, sink_cls, [((Fraction(1, 4),), 3)])


def test_non_expanding_search_is_not_guaranteed(north_south_graph):
    g = north_south_graph
    classes = chain_recurrent_classes(g)
    sink_cls = [c for c in classes if int(g.grid.box_of(np.array([[0.0]]))[0]) in c][0]
    schedule, pseudo, cert = glue_and_shadow(g, sink_cls, [(np.array([0.0]), 4)])
    assert not cert.guaranteed
    assert cert.max_deviation == pytest.approx(0.0, abs=1e-12)


def test_report_json_and_sidecar(tmp_path, doubling_graph):
    g = doubling_graph
    (cls,) = chain_recurrent_classes(g)
    schedule, pseudo, cert = glue_and_shadow(g, cls, [((Fraction(1, 3),), 5)])
    rep = glue_report(schedule, pseudo, cert)
    json.dumps(rep)
    assert len(rep["pseudo_orbit"]["points"]) == schedule.period
    fg = cached_graph("full_shift", 3, 3)
    (fcls,) = chain_recurrent_classes(fg)
    schedule, pseudo, cert = glue_and_shadow(fg, fcls, [(PeriodicWord((0, 1)), 100_010)])
    path = tmp_path / "side.bin"
    rep = glue_report(schedule, pseudo, cert, sidecar_path=path)
    assert "points" not in rep["pseudo_orbit"]
    data = np.fromfile(path, dtype="<f8").reshape(pseudo.points.shape)
    np.testing.assert_array_equal(data, pseudo.points)
