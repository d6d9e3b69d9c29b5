import pytest

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record a verdict line for the end-of-session acceptance summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(criterion: str, ok: bool, detail: str) -> bool:
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        print(lines[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
