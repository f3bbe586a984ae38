from acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, title, why = RESULTS[number]
        line = f"{status} {number:2d} {title}"
        terminalreporter.write_line(line + (f"  ({why})" if why else ""))
