import numpy as np
import pytest

from calapproach.approach import VectorPayoffGame
from calapproach.harness import label_efficient, matching_pennies_dark


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the criterion tested by the calling test."""
    lines = request.config._acceptance_lines

    def record(tag, ok, detail):
        lines.append(f"{tag} {'PASS' if ok else 'FAIL'} {detail}")
        print(lines[-1])

    return record


@pytest.fixture
def pm_game():
    return VectorPayoffGame([[1.0, -1.0], [-1.0, 1.0]])


@pytest.fixture
def le():
    return label_efficient()


@pytest.fixture
def mpd():
    return matching_pennies_dark()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
