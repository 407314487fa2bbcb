import re
from collections import OrderedDict

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results: "OrderedDict[int, list[bool]]" = OrderedDict()


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results.setdefault(int(m.group(1)), []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        ok = all(_results[num])
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}")
