import pytest
from hypothesis import HealthCheck, settings

from atroforge import bundled
from atroforge.dsl import parse_program
from atroforge.refactor import repair
from atroforge.workload import parse_workload

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WORKLOADS = ("courseware_getst_setst.wl", "courseware_getst_regst.wl",
             "courseware_regst_regst.wl")


@pytest.fixture(scope="session")
def courseware():
    return parse_program(bundled("courseware.dbp"))


@pytest.fixture(scope="session")
def repaired(courseware):
    """Repair result for courseware at default bounds (computed once)."""
    return repair(courseware)


@pytest.fixture(scope="session")
def fig2_workloads():
    return [parse_workload(bundled(name), name) for name in WORKLOADS]


@pytest.fixture(scope="session")
def detection(courseware):
    """Courseware detection report at default bounds (computed once)."""
    from atroforge.anomaly import detect
    return detect(courseware)


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
