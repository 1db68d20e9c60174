import numpy as np
import pytest

from idid.core import Dataset
from idid.simulation import Scenario, simulate_cross_section, simulate_panel


@pytest.fixture(scope="session")
def main_data():
    data, truth = simulate_cross_section(Scenario("main", 5000, 11))
    return data, truth


@pytest.fixture(scope="session")
def panel_data():
    return simulate_panel(Scenario("main", 5000, 12))


def make_dataset(n=10, p=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        rng.normal(size=(n, p)),
        rng.integers(0, 2, n),
        rng.normal(size=n),
        rng.integers(0, 2, n),
        rng.integers(0, 2, n),
    )


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Store a one-line outcome for the acceptance summary."""
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
