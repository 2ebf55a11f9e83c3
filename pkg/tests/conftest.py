import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_AC = re.compile(r"test_acceptance\.py::test_(ac\d+)_(\w+)")
_results: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    match = _AC.search(report.nodeid)
    if not match:
        return
    key = match.group(1).upper()
    entry = _results.setdefault(key, {"name": match.group(2), "ok": True, "ran": False})
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["ok"] &= report.passed


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results, key=lambda k: int(k[2:])):
        entry = _results[key]
        if not entry["ran"]:
            continue
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} {key} {entry['name']}")
