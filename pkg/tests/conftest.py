import numpy as np
import pytest
from hypothesis import settings

from regime_lr.timeseries import ArParams, simulate_ar

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_stationary(rng, p, scale=0.95):
    """Stationary AR coefficients drawn through partial autocorrelations."""
    pacf = rng.uniform(-scale, scale, p)
    phi = np.zeros(p)
    for k in range(p):
        prev = phi[:k].copy()
        phi[k] = pacf[k]
        phi[:k] = prev - pacf[k] * prev[::-1]
    return phi


@pytest.fixture
def ar1_series():
    return simulate_ar(ArParams(0.0, [0.5], 1.0), 250, seed=3)


ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
