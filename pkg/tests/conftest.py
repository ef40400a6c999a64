import networkx as nx
import pytest
from hypothesis import HealthCheck, settings

from topopoison import fixtures

settings.register_profile("pkg", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


def to_nx(t):
    g = nx.Graph()
    g.add_nodes_from(t.nodes)
    g.add_edges_from((p[0], q[0]) for p, q in t.links)
    return g


@pytest.fixture
def motivating():
    return fixtures.motivating_example()


@pytest.fixture
def motivating_target():
    return fixtures.motivating_target()


@pytest.fixture(scope="session")
def fattree():
    return fixtures.fattree()


@pytest.fixture(scope="session")
def chinanet():
    return fixtures.chinanet()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
