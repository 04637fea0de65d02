"""Collects the acceptance verdicts and prints them after the test session."""

import pytest

_VERDICTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def verdict(request):
    """Record ``(criterion, passed, detail)`` and echo it immediately."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(criterion: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
        _VERDICTS.append((criterion, passed, line))
        if capman is None:
            print(line, flush=True)
        else:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
