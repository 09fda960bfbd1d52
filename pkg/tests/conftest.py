def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid or "::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if not name.startswith("test_criterion_"):
                continue
            verdict = "PASS" if outcome == "passed" else "FAIL"
            lines.append(f"ACCEPTANCE {name[len('test_criterion_'):]}: {verdict}")
    if lines:
        terminalreporter.write_line("")
        for line in sorted(lines):
            terminalreporter.write_line(line)
