"""Tests for the noise schedule, time grids and the t* rule."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from simdm.errors import ArgumentError, DomainError
from simdm.schedule import NoiseSchedule, make_grid


def test_alpha_sigma_at_zero(schedule):
    """Test alpha_0 = 1 and sigma_0 = 0."""
    assert schedule.alpha(0.0) == 1.0
    assert schedule.sigma(0.0) == 0.0


def test_alpha_at_one_matches_closed_form(schedule):
    """Test alpha_1 = exp(-5.025) with default parameters."""
    assert schedule.alpha(1.0) == pytest.approx(math.exp(-5.025), rel=1e-12)
    assert schedule.alpha(1.0) == pytest.approx(6.56e-3, rel=1e-2)


def test_variance_preserving_identity(schedule):
    """Test alpha^2 + sigma^2 = 1 across [0, T]."""
    t = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(schedule.alpha(t) ** 2 + schedule.sigma(t) ** 2, 1.0, atol=1e-12)


def test_monotonicity(schedule):
    """Test alpha decreases, sigma increases and lambda strictly decreases."""
    t = np.linspace(schedule.eps, schedule.T, 200)
    assert np.all(np.diff(schedule.alpha(t)) <= 0)
    assert np.all(np.diff(schedule.sigma(t)) > 0)
    assert np.all(np.diff(schedule.lambda_of_t(t)) < 0)
    assert schedule.sigma(schedule.eps) > 0


def test_time_outside_domain_raises(schedule):
    """Test that times outside [0, T] raise a domain error."""
    with pytest.raises(DomainError):
        schedule.alpha(1.5)
    with pytest.raises(DomainError):
        schedule.sigma(-0.1)
    with pytest.raises(DomainError):
        schedule.lambda_of_t(0.0)


def test_lambda_inverse_pair(schedule):
    """Test t_of_lambda inverts lambda_of_t to 1e-10."""
    assert schedule.t_of_lambda(schedule.lambda_of_t(0.37)) == pytest.approx(0.37, abs=1e-10)
    t = np.linspace(schedule.eps, schedule.T, 57)
    np.testing.assert_allclose(schedule.t_of_lambda(schedule.lambda_of_t(t)), t, atol=1e-10)


def test_lambda_zero_where_alpha_equals_sigma(schedule):
    """Test lambda = 0 at the time where alpha_t = sigma_t."""
    t_half = schedule.t_of_lambda(0.0)
    assert schedule.alpha(t_half) == pytest.approx(schedule.sigma(t_half), rel=1e-10)
    lam_T, lam_eps = schedule.lambda_range
    assert lam_eps > lam_T


def test_t_of_lambda_outside_range_raises(schedule):
    """Test that log-SNR values outside [lambda_T, lambda_eps] raise."""
    lam_T, lam_eps = schedule.lambda_range
    with pytest.raises(DomainError):
        schedule.t_of_lambda(lam_eps + 1.0)
    with pytest.raises(DomainError):
        schedule.t_of_lambda(lam_T - 1.0)


def test_drift_diffusion_values(schedule):
    """Test f = -beta/2 and g^2 = beta, including t = 0."""
    f, g2 = schedule.drift_diffusion(0.0)
    assert f == pytest.approx(-0.05)
    assert g2 == pytest.approx(0.1)
    f, g2 = schedule.drift_diffusion(0.5)
    beta = 0.1 + 0.5 * 19.9
    assert f == pytest.approx(-beta / 2)
    assert g2 == pytest.approx(beta)


def test_drift_matches_finite_difference(schedule):
    """Test f(t) against a central difference of log alpha."""
    dt = 1e-6
    for t in (0.1, 0.5, 0.9):
        fd = (schedule.log_alpha(t + dt) - schedule.log_alpha(t - dt)) / (2 * dt)
        assert abs(schedule.drift_diffusion(t)[0] - fd) <= 1e-6


def test_dlog_sigma_dlambda_is_minus_alpha_squared(schedule):
    """Test the VP identity d log sigma / d lambda = -alpha^2."""
    t = np.linspace(schedule.eps, schedule.T, 11)
    np.testing.assert_allclose(schedule.dlog_sigma_dlambda(t), -schedule.alpha(t) ** 2, rtol=1e-12)


def test_schedule_validation():
    """Test that inconsistent schedule parameters are rejected."""
    with pytest.raises(ValidationError):
        NoiseSchedule(eps=1.0, T=1.0)
    with pytest.raises(ValidationError):
        NoiseSchedule(beta_min=5.0, beta_max=1.0)


def test_grid_single_step(schedule):
    """Test N=1 gives nodes [T, eps]."""
    grid = make_grid(schedule, 1)
    assert grid.nodes.tolist() == [1.0, 1e-3]
    assert grid.N == 1


def test_grid_uniform_t_first_node(schedule):
    """Test t_1 = 1 - 0.999/50 for N=50 uniform-t."""
    grid = make_grid(schedule, 50)
    assert grid.nodes[1] == pytest.approx(1 - 0.999 / 50, abs=1e-15)
    assert grid.nodes[0] == schedule.T
    assert grid.nodes[-1] == schedule.eps
    assert np.all(np.diff(grid.nodes) < 0)
    assert np.all(grid.h > 0)


def test_grid_uniform_lambda_equal_steps(schedule):
    """Test uniform-lambda grids have equal h_i and unit step ratios."""
    grid = make_grid(schedule, 20, "uniform-lambda")
    np.testing.assert_allclose(grid.h, grid.h[0], rtol=1e-8)
    for i in range(2, grid.N + 1):
        assert grid.step_ratio(i) == pytest.approx(1.0, rel=1e-8)


def test_grid_quadratic_t(schedule):
    """Test quadratic-t nodes are uniform in sqrt(t)."""
    grid = make_grid(schedule, 10, "quadratic-t")
    np.testing.assert_allclose(np.diff(np.sqrt(grid.nodes)), np.diff(np.sqrt(grid.nodes))[0])


def test_grid_refinement_halves_h_max(schedule):
    """Test doubling N halves h_max (uniform-lambda) or reduces it (uniform-t)."""
    for N in (10, 20, 40):
        coarse = make_grid(schedule, N, "uniform-lambda")
        fine = make_grid(schedule, 2 * N, "uniform-lambda")
        assert fine.h_max / coarse.h_max == pytest.approx(0.5, rel=0.1)
        assert make_grid(schedule, 2 * N).h_max < make_grid(schedule, N).h_max


def test_grid_anchor_is_node(schedule):
    """Test an anchored grid contains the anchor exactly."""
    grid = make_grid(schedule, 32, "uniform-lambda", anchor=0.3)
    assert 0.3 in grid.nodes.tolist()
    assert grid.N == 32
    assert np.all(np.diff(grid.nodes) < 0)


def test_grid_invalid_arguments(schedule):
    """Test argument errors for bad step counts and spacings."""
    with pytest.raises(ArgumentError):
        make_grid(schedule, 0)
    with pytest.raises(ArgumentError):
        make_grid(schedule, 10, "log-t")
    with pytest.raises(ArgumentError):
        make_grid(schedule, 1, anchor=0.5)


def test_grid_nodes_are_read_only(grid50):
    """Test grid arrays cannot be mutated."""
    with pytest.raises(ValueError):
        grid50.nodes[3] = 0.5


def test_t_star_solves_ratio(schedule):
    """Test sigma/alpha = C_s/sqrt(m) and alpha^2 = 1/(1 + C_s^2/m)."""
    C_s, m = 1.0, 16
    t_star = schedule.solve_t_star(C_s, m)
    assert schedule.eps < t_star < schedule.T
    assert schedule.snr_ratio(t_star) == pytest.approx(C_s / math.sqrt(m), abs=1e-10)
    assert schedule.alpha(t_star) ** 2 == pytest.approx(1 / (1 + C_s**2 / m), rel=1e-9)


def test_t_star_clips_to_T(schedule):
    """Test the upper clipping branch."""
    assert schedule.solve_t_star(1e4, 1) == schedule.T


def test_t_star_clips_to_eps(schedule):
    """Test the lower clipping branch."""
    assert schedule.solve_t_star(1e-3, 10_000) == schedule.eps


def test_t_star_monotone(schedule):
    """Test t* is non-decreasing in C_s and non-increasing in m."""
    by_c = [schedule.solve_t_star(c, 256) for c in (0.5, 1.0, 2.0, 4.0)]
    by_m = [schedule.solve_t_star(2.0, m) for m in (16, 64, 256, 1024)]
    assert by_c == sorted(by_c)
    assert by_m == sorted(by_m, reverse=True)


def test_t_star_invalid_arguments(schedule):
    """Test non-positive C_s and m < 1 raise."""
    with pytest.raises(ArgumentError, match="C_s"):
        schedule.solve_t_star(0.0, 10)
    with pytest.raises(ArgumentError, match="m must be"):
        schedule.solve_t_star(1.0, 0)
