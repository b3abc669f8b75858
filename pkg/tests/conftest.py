import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"
DEV_MAC = "70:ee:50:00:00:01"
GW_MAC = "14:cc:20:00:00:fe"
GW_IP = "192.168.1.1"


@pytest.fixture
def cfg():
    from mudtools.capture import CaptureConfig

    return CaptureConfig(DEV_MAC, GW_MAC, GW_IP)


@pytest.fixture
def fixtures():
    return FIXTURES


# --------------------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, list[str]] = {}
_TITLES: dict[int, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rpartition("::")[2]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        parts = name.split("[")[0].split("_")
        number = int(parts[2])
        _TITLES[number] = " ".join(parts[3:])
        _CRITERIA.setdefault(number, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcomes = _CRITERIA[number]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number} ({_TITLES[number]}): {verdict}")
