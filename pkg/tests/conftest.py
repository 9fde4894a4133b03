import pytest

from syncavg import swap_identity_system, halving_ifs, make_preset


@pytest.fixture
def halving():
    return halving_ifs()


@pytest.fixture
def swapid():
    return swap_identity_system()


@pytest.fixture
def rotations():
    return make_preset("circle-rotations")


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def record(request):
    """Log one PASS/FAIL line for an acceptance criterion; echoed in the terminal summary."""
    def _record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        request.config.stash[_LINES].append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
