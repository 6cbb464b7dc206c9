import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hardyloc.maximal import make_dictionary  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def d0_1d():
    return make_dictionary(2, 1)


@pytest.fixture(scope="session")
def dn_1d():
    return make_dictionary(2, 1, variant="DN", support_radius=4.0)


@pytest.fixture(scope="session")
def dn_1d_s1():
    return make_dictionary(3, 1, variant="DN", support_radius=4.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
