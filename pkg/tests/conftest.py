import pytest
from hypothesis import settings

from diqkd.bounds import default_library

# numerical examples run at variable speed; determinism matters, wall time does not
settings.register_profile("repo", deadline=None, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_RESULTS = []


def record(criterion, passed, detail):
    """``passed`` is True, False or None (skipped)."""
    ACCEPTANCE_RESULTS.append((criterion, passed if passed is None else bool(passed), detail))


@pytest.fixture(scope="session")
def library():
    return default_library()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        label = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"[{label}] criterion {criterion}: {detail}")
