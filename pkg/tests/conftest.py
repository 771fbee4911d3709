"""Shared fixtures plus the acceptance-criteria verdict report.

Every test in test_acceptance.py is one numbered acceptance criterion;
after the run, one PASS/FAIL line per criterion is printed so the
verdicts can be read without scanning the full pytest output.
"""

import numpy as np
import pytest

from ris2tce import SystemConfig, assemble_channels, preset

_ACCEPTANCE_FILE = "test_acceptance.py"
_labels: dict[str, str] = {}
_order: list[str] = []
_outcomes: dict[str, str] = {}


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        if item.nodeid.split("::")[0].endswith(_ACCEPTANCE_FILE):
            doc = item.function.__doc__ or item.name
            _labels[item.nodeid] = doc.strip().splitlines()[0]
            _order.append(item.nodeid)


def pytest_runtest_logreport(report):
    if report.nodeid not in _labels:
        return
    if report.when == "call":
        _outcomes[report.nodeid] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup":
        if report.failed:
            _outcomes[report.nodeid] = "FAIL"
        elif report.skipped:
            _outcomes[report.nodeid] = "SKIP"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _order:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid in _order:
        verdict = _outcomes.get(nodeid, "NOT RUN")
        terminalreporter.write_line(f"{verdict}  {_labels[nodeid]}")


# ---------------------------------------------------------------------------
# Fixtures


@pytest.fixture(scope="session")
def desk_config() -> SystemConfig:
    return SystemConfig()


@pytest.fixture(scope="session")
def paper_config() -> SystemConfig:
    return preset("paper")


@pytest.fixture(scope="session")
def desk_realization(desk_config):
    """One fixed non-degenerate desk-scale frame shared by read-only tests."""
    realization = assemble_channels(desk_config, np.random.default_rng(7))
    assert not realization.degenerate
    return realization
