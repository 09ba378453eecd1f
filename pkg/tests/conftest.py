import pytest

# (criterion, passed, detail) lines reported at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{status:4s}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL/SKIP line for the acceptance criterion under test."""

    class Recorder:
        def __init__(self):
            self.name = request.node.name
            self.details = []

        def note(self, text):
            self.details.append(text)
            print(text)

    rec = Recorder()
    yield rec
    report = getattr(request.node, "rep_call", None)
    if report is None or report.skipped:
        status = "SKIP"
    else:
        status = "PASS" if report.passed else "FAIL"
    ACCEPTANCE_LINES.append((rec.name, status, "; ".join(rec.details)))
    print(f"{status} {rec.name}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        item.rep_call = rep
