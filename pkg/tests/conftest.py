import pytest

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = marker.args[:2]
        budget = marker.kwargs.get("budget")
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA.append((number, title, rep.outcome, rep.duration, budget, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration, budget, detail in sorted(_CRITERIA):
        status = "PASS" if outcome == "passed" else "FAIL"
        limit = f" / budget {budget:g}s" if budget else ""
        line = f"criterion {number}: {status}  {title}  [{duration:.2f}s{limit}]"
        if detail:
            line += f"  {detail}"
        terminalreporter.write_line(line)
