import math

import numpy as np
import pytest

from nfradar import RadarConfig, Scene, TargetState

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def small_cfg():
    # tiny waveform for fast structural checks
    return RadarConfig(num_sensors_per_subarray=4, num_chirps=32, num_fast_samples=16,
                       pri_s=2e-3)


@pytest.fixture
def small_sep(small_cfg):
    return small_cfg.replace(subarray_separation_m=0.5)


@pytest.fixture
def ref_target():
    return TargetState(90.0, -20.0, 10.0, math.radians(40.0))


def noiseless(cfg, targets, **kw):
    return Scene(cfg, targets, snr_db=np.inf, **kw)
