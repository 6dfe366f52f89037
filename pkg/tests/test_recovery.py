"""Tests for the SIM-DMS, SIM-DMIS and SIM-DMFIS estimators."""

import numpy as np
import pytest

from simdm.analysis import metrics
from simdm.errors import ArgumentError, NumericalError
from simdm.inversion import Inverter
from simdm.measurements import back_project, make_instance
from simdm.models import ExperimentConfig, LinkSpec
from simdm.predictors import GMMPriorPredictor
from simdm.recovery import Estimator, build_grids
from simdm.schedule import make_grid
from simdm.solvers import Sampler


def make_estimator(predictor, n_samp=20, n_inv=20, c_s=1.0, c_s_prime=1.25, **kwargs):
    sampling, inversion = build_grids(predictor.schedule, n_samp, n_inv, "uniform-t")
    return Estimator(
        Sampler(predictor, sampling, kwargs.get("sampler", "ddim")),
        Inverter(predictor, inversion, kwargs.get("inverter", "second_order")),
        c_s=c_s,
        c_s_prime=c_s_prime,
    )


def test_build_grids_shares_equal_grids(schedule):
    """Test equal step counts reuse one grid and different counts do not."""
    sampling, inversion = build_grids(schedule, 30, 30, "uniform-lambda")
    assert sampling is inversion
    sampling, inversion = build_grids(schedule, 30, None, "uniform-t")
    assert sampling is inversion
    sampling, inversion = build_grids(schedule, 30, 12, "uniform-t")
    assert (sampling.N, inversion.N) == (30, 12)


def test_dmfis_round_trips_constant_predictor(constant_predictor):
    """Test G(G-dagger(b)) returns the back-projection itself for a point-mass prior."""
    estimator = make_estimator(constant_predictor, inverter="first_order")
    instance = make_instance(6, 50, LinkSpec(kind="linear"), np.ones(6), seed=0)
    result = estimator.recover_dmfis(instance.A, instance.y)
    b = back_project(instance.A, instance.y)
    np.testing.assert_allclose(result.x_hat, b, rtol=1e-10, atol=1e-12)
    assert result.t_star == constant_predictor.schedule.eps


def test_dmfis_nfe_is_inversion_plus_sampling(gaussian_predictor):
    """Test full inversion and full sampling cost N_inv + N_samp calls."""
    estimator = make_estimator(gaussian_predictor, n_samp=100, n_inv=50)
    instance = make_instance(4, 30, LinkSpec(), gaussian_predictor, seed=1)
    assert estimator.recover_dmfis(instance.A, instance.y).nfe == 150


def test_dms_at_eps_recovers_direction(standard_predictor):
    """Test a tiny C_s clips t* to eps and the estimate aligns with x* for a linear link."""
    estimator = make_estimator(standard_predictor, c_s=1e-3, c_s_prime=1.0)
    instance = make_instance(8, 20_000, LinkSpec(kind="linear"), standard_predictor, seed=2)
    result = estimator.recover_dms(instance.A, instance.y)
    assert result.t_star == standard_predictor.schedule.eps
    assert result.nfe == 1
    assert metrics(result.x_hat, instance.x_star).cosine >= 0.99


def test_dmis_at_T_is_full_sampling(gaussian_predictor):
    """Test t* = T skips inversion and samples the scaled back-projection."""
    estimator = make_estimator(gaussian_predictor, n_samp=15, c_s=1e4)
    instance = make_instance(4, 4, LinkSpec(kind="linear"), gaussian_predictor, seed=3)
    result = estimator.recover_dmis(instance.A, instance.y)
    schedule = gaussian_predictor.schedule
    start = schedule.alpha(schedule.T) * 1.25 * back_project(instance.A, instance.y)
    assert result.t_star == schedule.T
    assert result.nfe == 15
    np.testing.assert_allclose(result.x_hat, estimator.sampler.sample_full(start), rtol=1e-12)


def test_dmis_at_eps_matches_dmfis_of_scaled_observations(gmm_predictor):
    """Test t* = eps makes SIM-DMIS a full inversion of the scaled back-projection."""
    estimator = make_estimator(gmm_predictor, c_s=1e-3, c_s_prime=2.0)
    instance = make_instance(4, 100, LinkSpec(kind="sign", sigma=0.05), gmm_predictor, seed=4)
    dmis = estimator.recover_dmis(instance.A, instance.y)
    schedule = gmm_predictor.schedule
    scale = schedule.alpha(schedule.eps) * 2.0
    dmfis = estimator.recover_dmfis(instance.A, scale * instance.y)
    assert dmis.t_star == schedule.eps
    assert dmis.nfe == dmfis.nfe == 40
    np.testing.assert_allclose(dmis.x_hat, dmfis.x_hat, rtol=1e-9, atol=1e-12)


def test_intermediate_t_star_counts_calls(gaussian_predictor):
    """Test partial inversion plus full sampling costs j_{t*} + N_samp calls."""
    estimator = make_estimator(gaussian_predictor, n_samp=20, n_inv=20, c_s=1.0)
    instance = make_instance(4, 64, LinkSpec(), gaussian_predictor, seed=5)
    result = estimator.recover_dmis(instance.A, instance.y)
    expected = estimator.inverter.end_index(result.t_star) + 20
    assert gaussian_predictor.schedule.eps < result.t_star < gaussian_predictor.schedule.T
    assert result.nfe == expected
    dms = estimator.recover_dms(instance.A, instance.y)
    assert dms.nfe == 20 - estimator.sampler.start_index(dms.t_star) + 1


def test_nfe_budget(gaussian_predictor, grid50):
    """Test the nominal budget counts full grids regardless of t*."""
    estimator = make_estimator(gaussian_predictor, n_samp=100, n_inv=50)
    assert estimator.nfe_budget("sim_dms") == 100
    assert estimator.nfe_budget("sim_dmis") == estimator.nfe_budget("sim_dmfis") == 150
    sampler_only = Estimator(Sampler(gaussian_predictor, grid50), c_s=1.0, c_s_prime=1.0)
    assert sampler_only.nfe_budget("sim_dms") == 50
    with pytest.raises(ArgumentError, match="inverter"):
        sampler_only.nfe_budget("sim_dmis")


@pytest.mark.parametrize("method", ["sim_dms", "sim_dmis", "sim_dmfis"])
def test_recovery_is_deterministic(gmm_predictor, method):
    """Test repeated runs on one instance are bit-identical."""
    estimator = make_estimator(gmm_predictor, sampler="dm2m")
    instance = make_instance(4, 80, LinkSpec(kind="cubic", sigma=0.1), gmm_predictor, seed=6)
    first = estimator.recover(method, instance.A, instance.y)
    second = estimator.recover(method, instance.A, instance.y)
    np.testing.assert_array_equal(first.x_hat, second.x_hat)
    assert first.nfe == second.nfe


def test_non_finite_output_raises(gaussian_predictor, mocker):
    """Test a predictor returning inf surfaces as a numerical error."""
    estimator = make_estimator(gaussian_predictor)
    mocker.patch.object(gaussian_predictor, "predict", return_value=np.full(4, np.inf))
    instance = make_instance(4, 20, LinkSpec(), np.ones(4), seed=7)
    with pytest.raises(NumericalError, match="sim_dmfis"):
        estimator.recover_dmfis(instance.A, instance.y)


def test_missing_constants_and_inverter(gaussian_predictor, grid50):
    """Test SIM-DMS/DMIS need both constants and SIM-DMIS/DMFIS need an inverter."""
    instance = make_instance(4, 20, LinkSpec(), np.ones(4), seed=8)
    no_constants = make_estimator(gaussian_predictor, c_s=None)
    with pytest.raises(ArgumentError, match="C_s"):
        no_constants.recover_dms(instance.A, instance.y)
    sampler_only = Estimator(Sampler(gaussian_predictor, grid50), c_s=1.0, c_s_prime=1.0)
    with pytest.raises(ArgumentError, match="inverter"):
        sampler_only.recover_dmfis(instance.A, instance.y)
    assert sampler_only.recover_dms(instance.A, instance.y).nfe > 0
    with pytest.raises(ArgumentError, match="unsupported"):
        sampler_only.recover("sim_dm", instance.A, instance.y)


def test_shape_mismatch_raises(gaussian_predictor):
    """Test A and y must agree and A must match the predictor dimension."""
    estimator = make_estimator(gaussian_predictor)
    A = np.ones((10, 4))
    with pytest.raises(ArgumentError, match="incompatible"):
        estimator.recover_dms(A, np.ones(9))
    with pytest.raises(ArgumentError, match="dimension"):
        estimator.recover_dmfis(np.ones((10, 5)), np.ones(10))


def test_mismatched_schedules_rejected(gaussian_predictor):
    """Test sampler and inverter must share one schedule."""
    other = gaussian_predictor.schedule.model_copy(update={"eps": 1e-2})
    sampler = Sampler(gaussian_predictor, make_grid(gaussian_predictor.schedule, 10))
    foreign = GMMPriorPredictor.well_separated(other, n=4, components=2, variance=0.1)
    inverter = Inverter(foreign, make_grid(other, 10), "first_order")
    with pytest.raises(ArgumentError, match="schedule"):
        Estimator(sampler, inverter)


def test_from_config_grids_and_overrides(base_config_data):
    """Test config wiring, N_inv defaulting to the sweep cell's N_samp, and overrides."""
    data = dict(base_config_data, grid={"N_samp": 12, "sampler": "dm2m"})
    config = ExperimentConfig.model_validate(data)
    predictor = config.build_predictor()
    estimator = Estimator.from_config(config, predictor)
    assert estimator.sampler.grid.N == estimator.inverter.grid.N == 12
    assert estimator.sampler.method == "dm2m"
    assert (estimator.c_s, estimator.c_s_prime) == (1.0, 1.25)

    tuned = Estimator.from_config(config, predictor, c_s=2.0, n_samp=30)
    assert tuned.sampler.grid.N == tuned.inverter.grid.N == 30
    assert tuned.c_s == 2.0
    assert tuned.c_s_prime == 1.25


def test_from_config_per_method_grids(base_config_data):
    """Test grid.<method> blocks apply per method and explicit counts still win."""
    data = dict(base_config_data, grid={"N_samp": 12, "sim_dmis": {"N_samp": 30, "N_inv": 16}})
    config = ExperimentConfig.model_validate(data)
    predictor = config.build_predictor()
    dmis = Estimator.from_config(config, predictor, method="sim_dmis")
    assert (dmis.sampler.grid.N, dmis.inverter.grid.N) == (30, 16)
    dms = Estimator.from_config(config, predictor, method="sim_dms")
    assert dms.sampler.grid.N == dms.inverter.grid.N == 12
    cell = Estimator.from_config(config, predictor, n_samp=20, method="sim_dmis")
    assert (cell.sampler.grid.N, cell.inverter.grid.N) == (20, 16)


# Estimator comparisons on a peaked 4-mode mixture in R^32 with one-bit
# measurements. Budgets: 50 evaluations for SIM-DMS, 150 for the others.

PEAKED_MIXTURE_CONFIG = {
    "predictor": {"kind": "gmm", "components": 4, "variance": 0.002, "mode_seed": 0},
    "grid": {
        "N_samp": 100,
        "N_inv": 50,
        "spacing": "uniform-lambda",
        "inverter": "second_order",
        "sim_dms": {"N_samp": 50},
    },
    "link": {"kind": "sign", "sigma": 0.05},
    "recovery": {"method": ["sim_dms", "sim_dmis", "sim_dmfis"], "C_s": 3.0, "C_s_prime": 1.25},
    "run": {"n": 32, "m": 256, "trials": 50},
}


def median_cosines(config, methods, m, trials, **overrides):
    predictor = config.build_predictor()
    estimators = {
        method: Estimator.from_config(config, predictor, method=method, **overrides)
        for method in methods
    }
    cosines = {method: [] for method in methods}
    for trial in range(trials):
        instance = make_instance(config.run.n, m, config.link, predictor, seed=100 + trial)
        for method, estimator in estimators.items():
            result = estimator.recover(method, instance.A, instance.y)
            cosines[method].append(metrics(result.x_hat, instance.x_star).cosine)
    return {method: float(np.median(values)) for method, values in cosines.items()}


@pytest.mark.slow
def test_estimator_ordering_on_peaked_mixture():
    """Test median cosine SIM-DMIS > SIM-DMS > SIM-DMFIS at m = 8n."""
    config = ExperimentConfig.model_validate(PEAKED_MIXTURE_CONFIG)
    dms = Estimator.from_config(config, config.build_predictor(), method="sim_dms")
    dmis = Estimator.from_config(config, config.build_predictor(), method="sim_dmis")
    assert (dms.nfe_budget("sim_dms"), dmis.nfe_budget("sim_dmis")) == (50, 150)

    medians = median_cosines(config, config.recovery.method, m=256, trials=50)
    assert medians["sim_dmis"] > medians["sim_dms"] > medians["sim_dmfis"]
    assert medians["sim_dmis"] >= 0.975
    assert medians["sim_dms"] >= 0.975
    assert medians["sim_dmfis"] >= 0.96


@pytest.mark.slow
def test_dmis_improves_with_more_measurements():
    """Test the median SIM-DMIS cosine does not decrease over m = n, 2n, 4n, 8n."""
    config = ExperimentConfig.model_validate(PEAKED_MIXTURE_CONFIG)
    medians = [
        median_cosines(
            config, ["sim_dmis"], m=m, trials=50, c_s=1.25, n_samp=50, n_inv=50
        )["sim_dmis"]
        for m in (32, 64, 128, 256)
    ]
    assert medians == sorted(medians)
