import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dgfflab import DomainPair, LatticeDomain

settings.register_profile(
    "dgfflab",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("dgfflab")


def box(a, b, origin=(0, 0)):
    """Full ``a`` by ``b`` rectangle of sites."""
    return LatticeDomain.from_mask(np.ones((a, b), dtype=bool), origin)


def dense_laplacian_oracle(domain):
    """``I - P`` built site by site with a Python dict, independent of the package code."""
    sites = [tuple(s) for s in domain.sites.tolist()]
    pos = {s: i for i, s in enumerate(sites)}
    n = len(sites)
    L = np.eye(n)
    for i, (x, y) in enumerate(sites):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = pos.get((x + dx, y + dy))
            if j is not None:
                L[i, j] -= 0.25
    return L


@pytest.fixture
def nested_boxes():
    """5x5 box centred in a 9x9 box."""
    return DomainPair.from_domains(box(5, 5, (2, 2)), box(9, 9), N=10)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
