import os

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        cid, title = mark.args
        _RESULTS.setdefault(cid, (title, []))[1].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)):
        title, outcomes = _RESULTS[cid]
        ok = all(o == "passed" for _, o in outcomes)
        tr.write_line(f"criterion {cid:<4} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(int(os.environ.get("GBDP_TEST_SEED", "20261016")))
