import json

import pytest

from xferbench import plan


SMALL_MANIFEST = {
    "name": "small",
    "gen_params": {"n_subjects": 6, "epochs_per_subject": 120, "seed": 11, "mode": "Features"},
    "datasets": [
        {"dataset_id": "A", "environment_id": "envA", "condition": "Healthy", "sampling_rate_hz": 128,
         "channels": [{"channel": "F4", "alternate": "F3", "target": True}, {"channel": "O2"}]},
        {"dataset_id": "B", "environment_id": "envB", "condition": "Apnea", "sampling_rate_hz": 100,
         "channels": [{"channel": "C4", "target": True}]},
    ],
}


@pytest.fixture
def small_manifest():
    return plan.parse_manifest(json.loads(json.dumps(SMALL_MANIFEST)))


@pytest.fixture
def small_manifest_path(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL_MANIFEST))
    return p


# -- acceptance summary ------------------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    prev = _criteria.get(n, (True, 0.0, title))
    ok = prev[0] and not rep.failed
    _criteria[n] = (ok, prev[1] + rep.duration, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, secs, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({secs:.2f}s)")
