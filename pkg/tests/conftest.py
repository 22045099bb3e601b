import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion.

    The test calls ``criterion(number, description)`` before its checks;
    the outcome is filled in from the test report.
    """
    state = {}

    def declare(number: int, text: str):
        state["number"] = number
        state["text"] = text

    yield declare
    if "number" in state:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        _CRITERIA[state["number"]] = f"[{'PASS' if ok else 'FAIL'}] criterion {state['number']}: {state['text']}"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
