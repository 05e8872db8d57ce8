from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from intermittency_lab.evolve import eigendecompose, site_state
from intermittency_lab.operators import build_free_laplacian

settings.register_profile("lab", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def free_small():
    es = eigendecompose(build_free_laplacian(128))
    return es, site_state(es.sites, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, dim, scale=1.0):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (z + z.conj().T) / 2
    return scale * h / np.linalg.norm(h, 2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("ab:"))):
            terminalreporter.write_line(line)
