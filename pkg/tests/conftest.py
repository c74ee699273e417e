import numpy as np
import pytest

from blockbg.synth import bootstrap_spec, stationary_occluder_spec, synth_sequence

_acceptance: list[tuple[str, str, str]] = []


@pytest.fixture(scope="session")
def stationary_scene():
    """450-frame QVGA scene, one 64x96 occluder for frames 1-350, noise sigma 1."""
    return synth_sequence(stationary_occluder_spec(), seed=1)


@pytest.fixture(scope="session")
def bootstrap_scene():
    return synth_sequence(bootstrap_spec(), seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.split("::")[-1]
        _acceptance.append((name, report.outcome.upper(), detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _acceptance:
        status = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
