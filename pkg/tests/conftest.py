import numpy as np
import pytest

from buffgraph import kernels
from buffgraph.graph import Graph
from buffgraph.synth import SynthConfig, generate

# (criterion, PASS/FAIL/SKIP, detail) lines filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")


def random_graph(rng, n, p, n_classes=3, dim=4, unlabeled=0.0):
    """Erdos-Renyi graph with random labels and Gaussian features."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    src, dst = np.nonzero(upper)
    labels = rng.integers(0, n_classes, size=n)
    if unlabeled:
        labels[rng.random(n) < unlabeled] = -1
    return Graph.from_edges(n, src, dst, rng.standard_normal((n, dim)), labels, n_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [0, 1, 0], [1, 2, 2], np.eye(3), [0, 0, 1], 2)


@pytest.fixture
def small_sbm():
    return generate(SynthConfig([30, 30, 8, 8], p_in=0.15, p_out=0.03, feature_dim=6,
                                feature_noise=0.5, seed=3))


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)
