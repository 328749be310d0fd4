import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_report():
    """Records one verdict line per acceptance criterion for the summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
