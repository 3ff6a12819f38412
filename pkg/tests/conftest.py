import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clockspin import build_operators, get_system  # noqa: E402


@pytest.fixture(scope="session")
def bi():
    return get_system("Si:Bi")


@pytest.fixture(scope="session")
def bi_ops(bi):
    return build_operators(bi)


@pytest.fixture(scope="session")
def phos():
    return get_system("Si:P")


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.REPORT
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("]")[0].split("[")[1])):
            terminalreporter.write_line(line)
