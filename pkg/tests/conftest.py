import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))  # tests/oracles.py

settings.register_profile(
    "default", deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small on-disk dataset shared by train/cli tests."""
    from ridgenet.synth import NoiseParams, write_dataset

    root = tmp_path_factory.mktemp("tiny_data")
    params = NoiseParams(kernel_sizes=(5, 7), appearance_prob=0.1,
                         darkness=-0.5, kernel_stddev=1.5)
    write_dataset(root, 8, 2, 4, params, base_seed=11, height=24, width=40)
    return root
