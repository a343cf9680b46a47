import numpy as np
import pytest

from pulsefield.quantile import QuantileProfile

ACCEPTANCE_RESULTS = {}


def profile_from_z(z, phi_f=1.0):
    """Monotone profile with derivative ``z`` rescaled so that Q runs from 0 to phi_f."""
    z = np.asarray(z, dtype=float)
    n_cells = z.size - 1
    q = np.concatenate([[0.0], np.cumsum(0.5 * (z[1:] + z[:-1]) / n_cells)])
    scale = phi_f / q[-1]
    q = q * scale
    q[-1] = phi_f
    return QuantileProfile(q, z * scale, phi_f)


@pytest.fixture
def record_acceptance():
    def record(criterion, passed, detail):
        ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0].lstrip("C"))):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
