import numpy as np
import pytest

from halfcavity.config import load_config

MHZ = 2 * np.pi * 1e6


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture(scope="session")
def default_model(default_cfg):
    return default_cfg.model()
