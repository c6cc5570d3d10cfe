import functools

import pytest

from gelfand import ContinuationSettings, Nonlinearity, build_grid, critical_exponents, trace_branch


@functools.lru_cache(maxsize=None)
def branch(n, family="exp", q=None, M=1024, stop_after_fold=3):
    f = Nonlinearity.power(q) if family == "power" else Nonlinearity.exponential()
    return trace_branch(build_grid(M, "power", n), f, ContinuationSettings(stop_after_fold=stop_after_fold))


@pytest.fixture(scope="session")
def get_branch():
    return branch


@pytest.fixture(scope="session")
def q11():
    return critical_exponents(11).q_n


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
