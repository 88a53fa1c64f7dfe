import numpy as np
import pytest

from netpassivity.graph_core import Digraph
from netpassivity.network import assemble
from netpassivity.simulate import SimConfig, simulate
from netpassivity.systems import make_leaky_tanh_neuron, make_rectified_gain, make_static_gain

CASE_EDGES = ((1, 4), (1, 5), (4, 2), (5, 2), (2, 1), (2, 3), (3, 1))
CASE_A = [1.66, 3.22, 4.62, 1.5, 2.56]
CASE_X0 = [-2.0, -3.0, 6.0, 10.0, 1.0]
CASE_B = 4 / 3

# (criterion id, description, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def case_graph():
    return Digraph(5, CASE_EDGES)


@pytest.fixture
def path_graph():
    return Digraph(2, ((1, 2),))


@pytest.fixture
def cycle3():
    return Digraph(3, ((1, 2), (2, 3), (3, 1)))


def case_system(graph, controller="static", mode="decomposed_directed", agent_scale=1.0):
    make = make_static_gain if controller == "static" else make_rectified_gain
    agents = [make_leaky_tanh_neuron(a, declared_index=agent_scale * a) for a in CASE_A]
    return assemble(graph, agents, [make(CASE_B) for _ in CASE_EDGES], mode)


@pytest.fixture(scope="session")
def case_linear_run(case_graph):
    sys = case_system(case_graph, "static")
    return sys, simulate(sys, CASE_X0, SimConfig(t_end=30.0, dt=1e-3))


@pytest.fixture(scope="session")
def case_rectified_run(case_graph):
    sys = case_system(case_graph, "rectified")
    return sys, simulate(sys, CASE_X0, SimConfig(t_end=30.0, dt=1e-3))


def random_digraph_strategy():
    from hypothesis import strategies as st

    @st.composite
    def _digraphs(draw, n_min=1, n_max=7):
        n = draw(st.integers(n_min, n_max))
        pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
        mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
        return Digraph(n, tuple(p for p, keep in zip(pairs, mask) if keep))

    return _digraphs


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] AC{cid:02d} {desc} :: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
