import pytest

# criterion number -> (title, passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, title, passed, detail=""):
        prev = ACCEPTANCE.get(number)
        ok = bool(passed) and (prev is None or prev[1])
        ACCEPTANCE[number] = (title, ok, detail if prev is None else f"{prev[2]}; {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
