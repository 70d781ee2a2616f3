import pytest

from safetab.noise import available_backends

# Acceptance results collected by tests/test_acceptance.py and echoed in the
# terminal summary so they appear even when output capture is on.
ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "invariant: property listed among a module's invariants")
    config.addinivalue_line("markers", "slow: statistical test with 10^5 or more draws")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param
