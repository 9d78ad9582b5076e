import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlh.verify import polynomial_problem, small_mesh

settings.register_profile("nlh", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nlh")


@pytest.fixture
def mesh8():
    return small_mesh()


@pytest.fixture
def poly():
    return polynomial_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_coeffs(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[str(criterion)] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {'PASS' if passed else 'FAIL'}  {detail}")
