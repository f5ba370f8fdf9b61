import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    # one visible pass/fail line per acceptance criterion
    if rep.when == "call" and item.fspath.basename == "test_acceptance.py":
        tr = item.config.pluginmanager.get_plugin("terminalreporter")
        if tr is not None:
            verdict = "PASS" if rep.passed else "FAIL"
            tr.write_line(f"[acceptance] {item.name}: {verdict}")
