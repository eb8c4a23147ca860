import os

import pytest
from hypothesis import settings

settings.register_profile("polycap", max_examples=25, deadline=None)
settings.load_profile("polycap")

CRITERIA_LINES = []


@pytest.fixture
def report_line():
    """Record one summary line per acceptance criterion."""
    return CRITERIA_LINES.append


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tmp_fixtures(tmp_path, monkeypatch):
    d = tmp_path / "fixtures"
    d.mkdir()
    monkeypatch.setenv("POLYCAP_FIXTURES", str(d))
    return d


os.environ.setdefault("POLYCAP_WORKERS", "1")
