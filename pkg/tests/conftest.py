import math

import pytest
from hypothesis import HealthCheck, settings

from isingqb.dynamics import BatteryParams, BoundMode

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def p4():
    return BatteryParams(4.0, 1 / 3)


@pytest.fixture
def p4s():
    return BatteryParams(4.0, 1 / 3, BoundMode.SYMMETRIC)


@pytest.fixture
def p25():
    return BatteryParams(2.5, 1 / 3)


def params_for(omega0, chi, sequence):
    mode = BoundMode.SYMMETRIC if str(getattr(sequence, "value", sequence)) == "II" else BoundMode.NONNEG
    return BatteryParams(omega0, chi, mode)


SQRT3 = math.sqrt(3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.summary_line(k))
