import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def born_state():
    from collapselab.quantum_core import StateVector
    return StateVector(np.array([0.6, 0.8]))


@pytest.fixture
def pauli_z():
    from collapselab.quantum_core import HermitianOperator
    return HermitianOperator.diag([1.0, -1.0])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
