import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record_acceptance():
    def record(k: int, ok: bool, detail: str):
        ACCEPTANCE[k] = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
