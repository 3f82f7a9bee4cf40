import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    rows = []
    for status in ("passed", "failed"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" in report.nodeid and report.when == "call":
                name = report.nodeid.split("::")[-1]
                rows.append((name, "PASS" if status == "passed" else "FAIL", report.duration))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status, duration in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}  ({duration:.2f}s)")
