from pathlib import Path

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from boundary_triples.metric_graph import path_graph, star_graph, unit_interval

DATA = Path(__file__).parent / "data"

COTH1 = 1.0 / np.tanh(1.0)
CSCH1 = 1.0 / np.sinh(1.0)
LAMBDA_INTERVAL = np.array([[COTH1, -CSCH1], [-CSCH1, COTH1]])


def robin_roots_interval():
    """Robin ground states of the unit interval from scalar secular equations.

    ``B = I``: ``kappa tanh(kappa/2) = 1``, eigenvalue ``-kappa^2``.
    ``B = -I``: ``k tan(k/2) = 1``, eigenvalue ``k^2``.
    """
    kappa = brentq(lambda k: k * np.tanh(k / 2) - 1.0, 0.5, 3.0, xtol=1e-15)
    k = brentq(lambda k: k * np.tan(k / 2) - 1.0, 0.5, 2.0, xtol=1e-15)
    return -kappa ** 2, k ** 2, kappa, k


def star_robin_oracle(b, window):
    """Robin spectrum of the unit 3-star with ``Btilde = b I``, from scalar secular equations.

    Symmetric modes ``cos(k t)``: ``-k sin k = b cos k`` (simple).
    Antisymmetric modes ``sin(k t)``: ``k cos k = b sin k`` (double).
    Only positive spectrum is produced; callers pick windows accordingly.
    """
    out = []
    for F, mult in ((lambda k: -k * math.sin(k) - b * math.cos(k), 1),
                    (lambda k: k * math.cos(k) - b * math.sin(k), 2)):
        ks = np.linspace(1e-9, math.sqrt(window[1]), 4000)
        fs = [F(k) for k in ks]
        for k0, k1, f0, f1 in zip(ks, ks[1:], fs, fs[1:]):
            if f0 * f1 < 0:
                k = brentq(F, k0, k1, xtol=1e-15)
                if window[0] < k * k < window[1]:
                    out.append((k * k, mult))
    return sorted(out)


@pytest.fixture(scope="session")
def interval():
    return unit_interval()


@pytest.fixture(scope="session")
def star3():
    return star_graph(3, 1.0)


@pytest.fixture(scope="session")
def path2():
    return path_graph((1.0, 1.0))


@pytest.fixture(scope="session", params=["interval", "star3", "path2"])
def any_graph(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
