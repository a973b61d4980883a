import math

import pytest

from shrinkerlab.examples import abresch_langer, circle, product_torus

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def circle_sqrt2():
    return circle(SQRT2, 512)


@pytest.fixture(scope="session")
def clifford():
    return product_torus(n=64)


@pytest.fixture(scope="session")
def al_curve():
    return abresch_langer(2, 3, 2048)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_record(request, capsys):
    """Print a criterion line immediately and keep it for the end-of-run summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(line):
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
