import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from redmix.config import load_config
from redmix.dynamics import CglModel, CglParams
from redmix.noise import ForceSpec, decay_coefficients

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

SEED = 20240811


@pytest.fixture(scope="session")
def default_config():
    return load_config(None)


@pytest.fixture(scope="session")
def small_params():
    """Nonlinear model small enough for per-test integration."""
    return CglParams(n_modes=16, dt_log2=5)


@pytest.fixture(scope="session")
def small_model(small_params):
    return CglModel(small_params)


@pytest.fixture(scope="session")
def small_linear_model():
    return CglModel(CglParams(n_modes=16, dt_log2=5, linear=True))


@pytest.fixture(scope="session")
def small_spec():
    # K=3 keeps 15 Haar functions per channel; dt_log2=5 resolves the cells
    c = decay_coefficients(3, 1.0, 2.0)
    return ForceSpec(modes=(0, 1, -1), amplitudes=(0.2, 0.2, 0.2), c=tuple(c))


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)
