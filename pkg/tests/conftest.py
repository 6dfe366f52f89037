"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest

from simdm.predictors import ConstantPredictor, GaussianPriorPredictor, GMMPriorPredictor
from simdm.schedule import NoiseSchedule, make_grid


@pytest.fixture
def schedule():
    """Default VP schedule: beta_min=0.1, beta_max=20, T=1, eps=1e-3."""
    return NoiseSchedule()


@pytest.fixture
def grid50(schedule):
    """Uniform-t grid with 50 steps."""
    return make_grid(schedule, 50)


@pytest.fixture
def constant_predictor(schedule):
    """Point-mass prior in R^6."""
    return ConstantPredictor(schedule, np.array([0.5, -1.0, 2.0, 0.0, 0.25, -0.75]))


@pytest.fixture
def standard_predictor(schedule):
    """Standard-normal prior in R^8; the exact flow is the identity."""
    return GaussianPriorPredictor(schedule, np.zeros(8), np.ones(8))


@pytest.fixture
def gaussian_predictor(schedule):
    """Diagonal Gaussian prior with non-trivial mean and variances."""
    return GaussianPriorPredictor(
        schedule,
        mean=np.array([1.0, -0.5, 0.0, 2.0]),
        variance=np.array([0.5, 0.1, 2.0, 0.05]),
    )


@pytest.fixture
def gmm_predictor(schedule):
    """Two well-separated modes in R^4 with a moderate shared variance."""
    return GMMPriorPredictor.well_separated(schedule, n=4, components=2, variance=0.1, seed=3)


@pytest.fixture
def base_config_data():
    """Raw config blocks for a small recover run."""
    return {
        "predictor": {"kind": "gmm", "components": 2, "variance": 0.05, "mode_seed": 1},
        "grid": {"N_samp": 10, "N_inv": 10},
        "link": {"kind": "sign", "sigma": 0.05},
        "recovery": {"method": ["sim_dms", "sim_dmis"], "C_s": 1.0, "C_s_prime": 1.25},
        "run": {"n": 8, "m": 64, "trials": 2, "base_seed": 5},
    }
