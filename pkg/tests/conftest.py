import sys

import numpy as np
import pytest

from usrn.encoders import EncoderSpec
from usrn.models import TrainConfig
from usrn.volume import SyntheticSpec, VolumeGrid, make_synthetic_volume


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Reprint the acceptance scoreboard after capture ends; pytest's
    fd-level capture would otherwise swallow the per-criterion lines."""
    mod = sys.modules.get("test_acceptance")
    lines = list(getattr(mod, "SCOREBOARD", ())) if mod else []
    if lines:
        terminalreporter.section("acceptance criteria", sep="-")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_volume():
    """10^3 gaussian mixture, normalized."""
    return make_synthetic_volume(
        SyntheticSpec(kind="gaussian-mixture", dims=(10, 10, 10), seed=3)
    )


@pytest.fixture
def ramp_volume():
    """Linear ramp along x: value = (x + 1) / 2 at every vertex."""
    return make_synthetic_volume(
        SyntheticSpec(kind="linear-ramp", dims=(8, 8, 8), axis="x")
    )


@pytest.fixture
def constant_volume():
    """Constant field, pre-normalized by hand (normalize_volume rejects it)."""
    n = 6
    return VolumeGrid(
        dims=(n, n, n),
        values=np.full(n**3, 0.5),
        raw_range=(0.5, 0.5),
        normalized=True,
        name="constant",
    )


def tiny_config(kind="rmdsrn", **kw):
    """Training config small enough for unit tests."""
    defaults = dict(
        kind=kind,
        steps=10,
        batch_size=128,
        members=2,
        decoder_hidden=(2, 8),
        encoder=EncoderSpec(kind="dense", resolution=(4, 4, 4), feature_dim=2),
        seed=0,
        mcd_passes=3,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture
def tiny_cfg():
    return tiny_config
