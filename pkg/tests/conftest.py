import pytest

CRITERIA = {
    1: "guard-digit uniqueness",
    2: "exhaustive-sweep recall and category-1 response shape",
    3: "cluster prioritization yield",
    4: "voter brute-force bound and recall",
    5: "DOB-schedule equivalence and optimality",
    6: "burst dispersion",
    7: "extractor yields under noise",
    8: "sanitization kill-switch",
    9: "quota exactness",
    10: "defense leverage curve",
    11: "decoy detection",
    12: "end-to-end scenario",
    13: "transport equivalence",
}

_results: dict[int, bool] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or rep.failed:
        _results[n] = _results.get(n, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_results):
        verdict = "PASS" if _results[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {CRITERIA.get(n, '')}")
