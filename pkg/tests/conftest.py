import os

import pytest
from hypothesis import HealthCheck, settings

from rrdps.channel import ChannelParams

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Simulation parameters: heralding detector 0.045 / 1.7e-6, Bob's detector
# efficiency 0.045 with 1.7e-6 dark counts per pulse, e_d 3.3 %, 0.2 dB/km, f 1.16.
DARK_COUNT = 1.7e-6
ETA_B = 0.045
E_D = 0.033


def table_channel(L: int, **kw) -> ChannelParams:
    """Channel with the standard simulation parameters, dark counts aggregated per packet."""
    return ChannelParams.from_dark_count(DARK_COUNT, L, eta_b=ETA_B, e_d=E_D, **kw)


@pytest.fixture
def ch32() -> ChannelParams:
    return table_channel(32)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
