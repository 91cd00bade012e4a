import pytest

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record ``(label, passed, detail)``; printed in the terminal summary."""
    lines = request.config.stash[_VERDICTS]

    def record(label, passed, detail=""):
        lines.append(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip())
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
