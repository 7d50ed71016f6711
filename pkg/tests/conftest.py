from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURE_DIR = ROOT / "fixtures" / "mini"

_acceptance: dict[str, list[str]] = {}


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURE_DIR


def _criterion(item):
    marker = item.get_closest_marker("acceptance")
    return marker.args[0] if marker and marker.args else None


def pytest_runtest_logreport(report):
    name = getattr(report, "_acceptance", None)
    if name is None:
        return
    outcomes = _acceptance.setdefault(name, [])
    if report.when == "call" or report.outcome != "passed":
        outcomes.append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    name = _criterion(item)
    if name is not None:
        outcome.get_result()._acceptance = name


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _acceptance.items():
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"{status}  {name}")
