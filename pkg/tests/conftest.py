import pytest

from chaosbandit.signals import SourceSpec, write_trace

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def make_trace(tmp_path):
    """Write a .chaos trace from a byte sequence and return a trace SourceSpec factory."""

    def _make(data, stride=1, wrap_policy="wrap", name="t.chaos"):
        path = tmp_path / name
        write_trace(path, bytes(data))
        return SourceSpec(kind="trace", parameters={"path": str(path)}, stride=stride,
                          wrap_policy=wrap_policy)

    return _make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
