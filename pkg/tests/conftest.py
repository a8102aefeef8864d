import numpy as np
import pytest

from grushin import GrushinSpace


@pytest.fixture
def plane():
    return GrushinSpace.grushin_plane()


@pytest.fixture
def space3():
    return GrushinSpace(["1", "x1", "x1*x2"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(results, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
