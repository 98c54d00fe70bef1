import re

CRITERIA = {
    1: "kernel exactness",
    2: "excursion identity",
    3: "pathwise U <= V",
    4: "D/Z distributional identity",
    5: "coupling certificate",
    6: "coupled domination",
    7: "speed consistency",
    8: "strict speed monotonicity at equal drift",
    9: "zero-speed dichotomy",
    10: "escape-probability strict gap",
    11: "classification grid",
}

_results: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _results.setdefault(int(m.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n not in _results:
            continue
        status = "PASS" if all(_results[n]) else "FAIL"
        terminalreporter.write_line(f"{status}  {n:2d}. {title}")
