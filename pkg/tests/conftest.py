import numpy as np
import pytest

from mseqpt.designs import build_mub_design
from mseqpt.operators import build_pauli_basis

_acceptance = []


@pytest.fixture(scope="session")
def basis2():
    return build_pauli_basis(2)


@pytest.fixture(scope="session")
def design4():
    return build_mub_design(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _acceptance:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}  ({duration:.2f}s)")
