import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvrpstw.problem import Customer, Instance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(points, demands=None, windows=None, alpha=0.0, beta=0.0, fleet_size=1, capacity=100.0,
                  depot=(0.0, 0.0)):
    """Small hand-built instance; windows default to [0, 1e9]."""
    n = len(points)
    demands = demands if demands is not None else [1.0] * n
    windows = windows if windows is not None else [(0.0, 1e9)] * n
    alphas = alpha if isinstance(alpha, (list, tuple)) else [alpha] * n
    betas = beta if isinstance(beta, (list, tuple)) else [beta] * n
    custs = [Customer(i + 1, float(x), float(y), float(d), float(e), float(l), float(a), float(b))
             for i, ((x, y), d, (e, l), a, b) in enumerate(zip(points, demands, windows, alphas, betas))]
    return Instance(depot, tuple(custs), fleet_size, capacity)


def random_partition(rng, n, m):
    """Random assignment of customers 1..n to m routes in random order."""
    perm = list(rng.permutation(np.arange(1, n + 1)))
    cuts = sorted(rng.integers(0, n + 1, size=m - 1).tolist())
    bounds = [0] + cuts + [n]
    return [[int(c) for c in perm[bounds[k]:bounds[k + 1]]] for k in range(m)]


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
