import numpy as np
import pytest

from napgcl.graph import make_graph

ACCEPTANCE_LINES: list[str] = []


def random_graph(rng: np.random.Generator, n: int, num_domains: int = 2, num_classes: int = 2,
                 num_features: int = 3, edge_prob: float = 0.3):
    domains = np.arange(n) % num_domains
    labels = rng.integers(num_classes, size=n)
    iu, ju = np.triu_indices(n, k=1)
    hit = rng.random(len(iu)) < edge_prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    x = rng.standard_normal((n, num_features))
    return make_graph(x, edges, domains, labels, num_domains, num_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_graph():
    return make_graph([[1.0, 2.0], [3.0, 4.0]], [[0, 1]], [0, 1], [0, 1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
