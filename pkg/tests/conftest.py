import pytest

from multisym.dsl import load_theory
from multisym.reference import fixture_text
from multisym.session import TheorySession

_SESSIONS: dict = {}
_ACCEPTANCE: dict = {}


def session_for(name: str) -> TheorySession:
    if name not in _SESSIONS:
        _SESSIONS[name] = TheorySession(load_theory(fixture_text(name)))
    return _SESSIONS[name]


@pytest.fixture
def kg():
    return session_for("kg")


@pytest.fixture
def polyakov():
    return session_for("polyakov")


@pytest.fixture
def einstein_cartan():
    return session_for("einstein_cartan")


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome
    elif report.when == "setup" and report.failed and "test_acceptance.py::test_criterion_" in report.nodeid:
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        number = name.split("_")[2]
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  ({name})")
