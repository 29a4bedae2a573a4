import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finsler_zeta.geometry import ConvexTarget, SupportBody

settings.register_profile(
    "default", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disc():
    return SupportBody.ball(2)


@pytest.fixture(scope="session")
def ellipse():
    return SupportBody.ellipsoid(np.diag([1.0, 1.3]))


@pytest.fixture(scope="session")
def origin2():
    return ConvexTarget.at_point([0.0, 0.0])


@pytest.fixture(scope="session")
def off_lattice2():
    return ConvexTarget.at_point([1.0, 1.0])


_ACCEPTANCE_LINES = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _ACCEPTANCE_LINES.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
