import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    status: dict[int, list[str]] = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            n = getattr(rep, "criterion", None)
            if n is not None and rep.when in ("call", "setup"):
                if rep.when == "setup" and rep.outcome == "passed":
                    continue
                status.setdefault(n, []).append("PASS" if rep.outcome == "passed" else "FAIL")
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(status):
        verdict = "PASS" if all(s == "PASS" for s in status[n]) else "FAIL"
        details = CRITERION_NOTES.get(n, "")
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {details}")


CRITERION_NOTES: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args[0]


@pytest.fixture
def note(request):
    """Attach a one-line measurement summary to the test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def _note(text: str) -> None:
        n = marker.args[0]
        prev = CRITERION_NOTES.get(n)
        CRITERION_NOTES[n] = f"{prev}; {text}" if prev else text

    return _note
