import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion, printed after the run."""
    results: dict[int, tuple[str, str]] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.getreports(outcome):
            match = _CRITERION.search(report.nodeid)
            if match and report.when == "call":
                number = int(match.group(1))
                status = "PASS" if outcome == "passed" else "FAIL"
                results[number] = (status, match.group(2).replace("_", " "))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, name = results[number]
        terminalreporter.write_line(f"criterion {number} [{status}] {name}")
