import math
import warnings

import pytest

from epryoung.sampler import SamplerConfig, sample_far, sample_near
from epryoung.states import EprSource, GratingSpec, SetupWarning, build_mme_state

_CRITERIA = {}


def default_source(n_slits=2):
    sigma_rel = 0.05
    return EprSource(sigma_rel, 3.0 * n_slits, t_grating=0.5 * sigma_rel**2)


@pytest.fixture(scope="session")
def mme2():
    return build_mme_state(GratingSpec(2), default_source(2))


@pytest.fixture(scope="session")
def mme5():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SetupWarning)
        return build_mme_state(GratingSpec(5), default_source(5))


@pytest.fixture(scope="session")
def far2(mme2):
    return sample_far(mme2, SamplerConfig(seed=11, n_events=100_000))


@pytest.fixture(scope="session")
def near2(mme2):
    return sample_near(mme2, SamplerConfig(seed=12, n_events=100_000))


@pytest.fixture(scope="session")
def two_pi():
    return 2.0 * math.pi


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    crit = marker.args[0]
    entry = _CRITERIA.setdefault(crit, {"passed": True, "ran": False, "failed": [], "measured": []})
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["ran"] = True
        if rep.when == "call":
            entry["measured"].extend(v for k, v in item.user_properties if k == "measured")
        if not rep.passed:
            entry["passed"] = False
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        e = _CRITERIA[crit]
        if not e["ran"]:
            continue
        status = "PASS" if e["passed"] else "FAIL"
        extra = "" if e["passed"] else f"  ({', '.join(e['failed'])})"
        terminalreporter.write_line(f"criterion {crit:2d}: {status}{extra}")
        for note in e["measured"]:
            terminalreporter.write_line(f"    {note}")
