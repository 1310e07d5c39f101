import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_acceptance_key] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    lines = request.config.stash[_acceptance_key]

    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_acceptance_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
