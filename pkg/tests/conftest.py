"""Shared fixtures: the reference device and a seeded RNG."""

import numpy as np
import pytest

from phonon_herald.params import TWO_PI, default_params


@pytest.fixture
def device():
    """Reference device parameters, angular rates as configured."""
    return default_params()


@pytest.fixture
def device_run(device):
    """Reference device under the cycles reading of the mechanical
    linewidth (the storage-time convention the published numbers use)."""
    return device.replace(gamma=device.gamma / TWO_PI)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
