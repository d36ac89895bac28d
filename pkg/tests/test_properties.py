"""Cross-module invariants as property tests."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cached_graph
from physlike.chain import chain_recurrent_classes
from physlike.systems import BUILTINS, PeriodicWord, golden_mean, sequence_distance, sft_shadow, system_from_config, orbit_segment

MAPS = ["doubling", "north_south", "tent", "identity", "cat"]


@pytest.mark.parametrize("name", MAPS)
def test_lipschitz_bound_on_random_pairs(name):
    f = system_from_config({"name": name})
    r = np.random.default_rng(17)
    x = r.random((10**4, f.dimension))
    # nearby pairs probe the local constant; wrapped differences keep the metric honest
    y = np.mod(x + (r.random(x.shape) - 0.5) * 0.02, 1.0)
    lhs = f.distance(f.step(x), f.step(y))
    rhs = f.lipschitz_bound * f.distance(x, y)
    assert (lhs <= rhs + 1e-12).all()


@pytest.mark.parametrize("name", MAPS)
def test_maps_stay_on_the_torus(name):
    f = system_from_config({"name": name})
    y = f.step(np.random.default_rng(2).random((1000, f.dimension)))
    assert ((0 <= y) & (y < 1)).all()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=12, max_size=12), st.lists(st.integers(0, 1), min_size=12, max_size=12))
def test_sequence_metric_prefix_rule(a, b):
    a, b = np.asarray(a, dtype=np.int8), np.asarray(b, dtype=np.int8)
    d = float(sequence_distance(a, b))
    for m in range(13):
        assert (d <= 2.0**-m) == bool((a[:m] == b[:m]).all())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_periodic_shadow_has_period_dividing_T(T, seed):
    g = golden_mean(window=6)
    # a true periodic orbit used as a periodic pseudo-orbit
    r = np.random.default_rng(seed)
    block = [0]
    while len(block) < T:
        block.append(0 if block[-1] == 1 else int(r.integers(0, 2)))
    if block[-1] == 1 and block[0] == 1:
        block[-1] = 0
    z = PeriodicWord(tuple(block))
    X = orbit_segment(g, z, T)
    w = sft_shadow(g, X, 0.3, periodic=True)
    assert T % w.period == 0 or w.period == T
    assert g.is_admissible(w)


@pytest.mark.parametrize("name", list(BUILTINS))
def test_classes_forward_invariant_at_graph_level(name):
    depth = 4 if name in ("full_shift", "golden_mean", "cat") else 6
    g = cached_graph(name, depth, 3)
    for cls in chain_recurrent_classes(g):
        for b in cls.boxes:
            assert any(int(u) in cls for u in g.successors(b))


@pytest.mark.parametrize("name", ["doubling", "cat"])
def test_box_samples_include_center_and_corners(name):
    from physlike.chain import BoxGrid, box_samples

    f = system_from_config({"name": name})
    grid = BoxGrid(f.dimension, 3)
    boxes = np.arange(4)
    pts = box_samples(grid, boxes, 32, 0, 0)
    lo = grid.lower_corners(boxes)
    s = grid.diameter
    for i in range(len(boxes)):
        P = pts[i]
        assert P.shape[0] == 32
        assert np.allclose(P[0], lo[i] + s / 2)
        assert ((P >= lo[i] - 1e-12) & (P <= lo[i] + s + 1e-12)).all()
