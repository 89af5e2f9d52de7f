_criterion_lines = []


def record_criterion(num, desc, ok, elapsed, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {num}: {desc} ({elapsed:.1f}s)"
    if detail:
        line += f" -- {detail}"
    _criterion_lines.append((num, line))
    return ok


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
