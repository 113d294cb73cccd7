import numpy as np
import pytest

from monopose.core import DEFAULT_SKELETON
from monopose.synth import SynthConfig, generate_scene

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def skeleton():
    return DEFAULT_SKELETON


@pytest.fixture
def clean_scene():
    return generate_scene(SynthConfig(seed=3, n_persons=(3, 3)))


@pytest.fixture
def random_pose(rng):
    def make(n=17, scale=300.0):
        joints = rng.normal(scale=scale, size=(n, 3))
        joints[0] = 0.0
        return joints
    return make
