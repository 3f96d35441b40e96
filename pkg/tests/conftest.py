import math

import numpy as np
import pytest

from tiltedps import Grid1D, Grid2D


@pytest.fixture(scope="session")
def wide_grid():
    return Grid1D(-12.0, 12.0, 961)


@pytest.fixture(scope="session")
def plane():
    return Grid2D.square(-5.0, 5.0, 41)


def rodrigues_hermite(n, x):
    """h_n from the physicists' Hermite polynomial (numpy's series evaluation)."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    Hn = np.polynomial.hermite.hermval(x, c)
    return Hn * np.exp(-x * x / 2) / math.sqrt(2.0 ** n * math.factorial(n) * math.sqrt(math.pi))


# -- acceptance summary -----------------------------------------------------------------------

_DETAILS = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``criterion(ok, detail)`` records the measured figure and asserts ``ok``."""
    details = request.config.stash.setdefault(_DETAILS, {})

    def record(ok, detail):
        details[request.node.nodeid] = detail
        print(("PASS " if ok else "FAIL ") + detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    details = config.stash.get(_DETAILS, {})
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome != "error":
                continue
            name = rep.nodeid.split("::")[-1][len("test_criterion_"):]
            num, _, title = name.partition("_")
            verdict = "PASS" if outcome == "passed" else "FAIL"
            rows.append((int(num), f"[{verdict}] {int(num):2d} {title.replace('_', ' ')}: "
                                   f"{details.get(rep.nodeid, outcome)}"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(rows):
            terminalreporter.write_line(line)
