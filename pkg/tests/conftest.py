import numpy as np
import pytest

from orliczot import DiscreteMeasure, Graph, build_spt


@pytest.fixture
def p3():
    """Path 0 -(1)- 1 -(2)- 2 rooted at 0."""
    return Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)], root=0)


@pytest.fixture
def p3_spt(p3):
    return build_spt(p3)


@pytest.fixture
def p3_pair():
    return DiscreteMeasure.from_dict({1: 1.0}), DiscreteMeasure.from_dict({2: 0.5})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion; printed at the end of the run."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        lines[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (int(k.rstrip("abc")), k)):
            terminalreporter.write_line(lines[key])
