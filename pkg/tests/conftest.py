import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from approx_maxsim import build_index
from approx_maxsim.evaluation.synth import synth

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = getattr(report, "criterion", None)
    if label:
        prev = _criteria.get(label[0])
        if prev is None or prev[0] == "PASSED":  # any failing test fails the criterion
            _criteria[label[0]] = (report.outcome.upper(), label[1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark:
        rep.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s[2:])):
        outcome, desc = _criteria[label]
        terminalreporter.write_line(f"{label} {outcome:7s} {desc}")


@pytest.fixture(scope="session")
def small_workload():
    return synth(num_docs=200, doc_len=6, num_queries=12, query_len=4, dim=16, clusters=4, seed=3)


@pytest.fixture(scope="session")
def small_index(small_workload):
    corpus, _, _ = small_workload
    return build_index(corpus, nlist=16, m=4, k_sub=32, train_fraction=0.5, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
