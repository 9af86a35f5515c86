def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    reports = []
    for key in ("passed", "failed"):
        reports.extend(terminalreporter.stats.get(key, []))
    acceptance = [
        r for r in reports
        if getattr(r, "when", None) == "call" and "test_acceptance" in r.nodeid
    ]
    if not acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for r in sorted(acceptance, key=lambda r: r.nodeid):
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {r.nodeid.split('::')[-1]}")
