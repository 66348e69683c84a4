import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# seconds allowed for the whole test session (criterion 12)
SUITE_BUDGET = 600.0

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test gates")
    config._suite_t0 = time.perf_counter()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    n, title = mark.args
    entry = _results.setdefault(n, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and rep.passed
    entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    elapsed = time.perf_counter() - config._suite_t0
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        entry = _results[n]
        ok = entry["ok"]
        details = list(dict.fromkeys(entry["details"]))
        if n == 12:
            ok = ok and elapsed < SUITE_BUDGET
            details.append(f"suite wall time {elapsed:.1f}s (budget {SUITE_BUDGET:.0f}s)")
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {entry['title']}"
        if details:
            line += " | " + "; ".join(details)
        tr.write_line(line)
