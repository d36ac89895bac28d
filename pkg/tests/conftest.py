import os
import sys

import numpy as np
import pytest

from physlike import chain, gluing, systems
from physlike.chain import build_transition_graph, delta_for

# Every PseudoOrbit emitted by the library's two builders during the session is
# recorded with its system, so the acceptance suite can re-check all of them.
EMITTED = []


def _wrap_chain(fn):
    def wrapper(graph, *a, **kw):
        out = fn(graph, *a, **kw)
        EMITTED.append((out, graph.system))
        return out

    return wrapper


def _wrap_glue(fn):
    def wrapper(graph, cls, segments, system=None):
        schedule, pseudo = fn(graph, cls, segments, system)
        EMITTED.append((pseudo, graph.system if system is None else system))
        return schedule, pseudo

    return wrapper


chain.find_delta_chain = _wrap_chain(chain.find_delta_chain)
gluing.find_delta_chain = chain.find_delta_chain
gluing.glue_periodic_pseudo_orbit = _wrap_glue(gluing.glue_periodic_pseudo_orbit)


def graph_of(system, depth, delta_boxes, **kw):
    return build_transition_graph(system, depth, delta_for(depth, delta_boxes), **kw)


_GRAPHS = {}


def cached_graph(name, depth, delta_boxes, **kw):
    key = (name, depth, delta_boxes, tuple(sorted(kw.items())))
    if key not in _GRAPHS:
        _GRAPHS[key] = build_transition_graph(systems.system_from_config({"name": name}), depth, delta_for(depth, delta_boxes), **kw)
    return _GRAPHS[key]


@pytest.fixture
def doubling_graph():
    return cached_graph("doubling", 6, 3)


@pytest.fixture
def north_south_graph():
    return cached_graph("north_south", 7, 2)


@pytest.fixture
def golden_graph():
    return cached_graph("golden_mean", 4, 3)


def rng(*key):
    return np.random.default_rng(list(key))


sys.path.insert(0, os.path.dirname(__file__))


# acceptance criteria run last (criterion 2 audits everything emitted before it)
# and report one line each at the end of the session
ACCEPTANCE = {}


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
