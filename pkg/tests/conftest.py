import time
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tikhoflow.dynamics import CoefficientSignWarning, FlowParams, integrate, log_schedule
from tikhoflow.problems import get_problem

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

BENCH_PARAMS = FlowParams(alpha=2.0, q=0.75, s=1 / 6, beta=0.5, gamma=1.0, c=0.25)
BENCH_U0 = np.array([2.0, -1.0, 3.0, -2.0])
X_STAR = np.array([1.0, 1.0, 0.0, 0.0])

ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True)
def _quiet_sign_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoefficientSignWarning)
        yield


@pytest.fixture(scope="session")
def rankdef():
    return get_problem("rankdef")


@pytest.fixture(scope="session")
def benchmark_run(rankdef):
    """The rank-deficient benchmark to T = 1e4, 50 samples per decade."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoefficientSignWarning)
        start = time.perf_counter()
        traj = integrate(rankdef, BENCH_PARAMS, BENCH_U0, np.zeros(4), log_schedule(1.0, 1e4, 50))
        elapsed = time.perf_counter() - start
    return traj, elapsed


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
