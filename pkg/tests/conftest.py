import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        status, detail = mod.RESULTS.get(n, ("NOT RUN", "skipped or deselected"))
        terminalreporter.write_line(f"criterion {n}: {status} - {detail}")
