import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from afcsim import CombParams, FrequencyGrid, TimeGrid  # noqa: E402


@pytest.fixture
def grid():
    # 50 kHz spacing: resolves teeth down to 0.4 MHz
    return FrequencyGrid(200e6, 4001)


@pytest.fixture
def time_grid():
    return TimeGrid(0.0, 1e-9, 4000)


@pytest.fixture
def comb4():
    return CombParams(4e6, 1.5e6, "lorentzian", 2.0, 1.5)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE]

    def check(number: int, title: str, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} [{number:2d}] {title}: {detail}"
        lines.append((number, line))
        print(line)
        assert passed, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
