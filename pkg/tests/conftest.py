import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("kite", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kite")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(rng, n, complex_=True):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def random_density(rng, n, complex_=True):
    g = rng.standard_normal((n, n)) + (1j * rng.standard_normal((n, n)) if complex_ else 0)
    a = g @ g.conj().T
    return a / np.trace(a).real


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call" and report.passed:
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "seconds": 0.0, "detail": ""})
    if report.when == "call":
        entry["seconds"] = report.duration
    if report.failed:
        entry["passed"] = False
        msg = getattr(report.longrepr, "reprcrash", None)
        entry["detail"] = msg.message.splitlines()[0] if msg is not None else report.when


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["passed"] else "FAIL"
        line = f"{status} criterion {number} ({e['title']}): {e['seconds']:.1f} s"
        if not e["passed"]:
            line += f"; {e['detail']}"
        terminalreporter.write_line(line)
