import pytest

from h2jet.cli import SHIPPED, shipped_scenario
from h2jet.harness import evaluation_positions, parse_scenario
from h2jet.oracle import integrate, sample_sensors


def load(name):
    return parse_scenario(shipped_scenario(name))


@pytest.fixture(scope="session")
def shipped():
    """Scenario, trajectory, 20-point evaluation set and 5 sensors for each shipped file."""
    out = {}
    for name in SHIPPED:
        cfg = load(name)
        traj = integrate(cfg)
        pos = evaluation_positions(cfg)
        out[name] = (cfg, traj, sample_sensors(traj, pos, cfg), sample_sensors(traj, pos, cfg, k=5))
    return out


@pytest.fixture(scope="session")
def subsonic(shipped):
    return shipped["subsonic_vertical"]



_ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record one acceptance-criterion line; printed in the terminal summary."""

    def record(number, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
