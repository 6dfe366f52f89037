"""Noise schedule, log-SNR reparameterisation, time grids and the t* rule."""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from simdm.errors import ArgumentError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
Spacing = Literal["uniform-t", "uniform-lambda", "quadratic-t"]

# Slack allowed when a caller passes an endpoint that went through float arithmetic.
_TIME_SLACK = 1e-12
_T_STAR_XTOL = 1e-12


def _as_output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    """Return a Python float for scalar input, the array otherwise."""
    if np.ndim(like) == 0:
        return float(value)
    return value


class NoiseSchedule(BaseModel):
    """
    Variance-preserving noise schedule.

    q_{0t}(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I) with
    log alpha_t = -t^2 (beta_max - beta_min) / 4 - t beta_min / 2 and
    sigma_t = sqrt(1 - alpha_t^2). Every other module talks to the schedule
    only through alpha/sigma/lambda and their derivatives, so other families
    can be added behind the same interface.

    All time-valued methods accept floats or numpy arrays.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta_min: float = Field(0.1, gt=0)
    beta_max: float = Field(20.0, gt=0)
    T: float = Field(1.0, gt=0)
    eps: float = Field(1e-3, gt=0)

    @model_validator(mode="after")
    def _check_ordering(self) -> "NoiseSchedule":
        if self.beta_max < self.beta_min:
            raise ValueError("beta_max must be >= beta_min")
        if self.eps >= self.T:
            raise ValueError("eps must be smaller than T")
        return self

    # Domain helpers

    def _check_time(self, t: ArrayLike, lower: float = 0.0) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        if (
            not np.all(np.isfinite(arr))
            or np.any(arr < lower - _TIME_SLACK)
            or np.any(arr > self.T + _TIME_SLACK)
        ):
            raise DomainError(f"time {t!r} outside [{lower}, {self.T}]")
        return np.clip(arr, lower, self.T)

    # Marginal coefficients

    def log_alpha(self, t: ArrayLike) -> ArrayLike:
        """Compute log(alpha_t) for t in [0, T]."""
        arr = self._check_time(t)
        value = -0.25 * arr**2 * (self.beta_max - self.beta_min) - 0.5 * arr * self.beta_min
        return _as_output(value, t)

    def alpha(self, t: ArrayLike) -> ArrayLike:
        """
        Compute alpha_t for t in [0, T].

        Raises:
            DomainError: If t lies outside [0, T].
        """
        return _as_output(np.exp(np.asarray(self.log_alpha(t))), t)

    def sigma(self, t: ArrayLike) -> ArrayLike:
        """
        Compute sigma_t = sqrt(1 - alpha_t^2) for t in [0, T].

        Raises:
            DomainError: If t lies outside [0, T].
        """
        log_alpha = np.asarray(self.log_alpha(t))
        return _as_output(np.sqrt(-np.expm1(2.0 * log_alpha)), t)

    def snr_ratio(self, t: ArrayLike) -> ArrayLike:
        """Compute sigma_t / alpha_t, strictly increasing in t."""
        log_alpha = np.asarray(self.log_alpha(t))
        return _as_output(np.sqrt(np.expm1(-2.0 * log_alpha)), t)

    # Log-SNR reparameterisation

    def lambda_of_t(self, t: ArrayLike) -> ArrayLike:
        """
        Compute lambda_t = log(alpha_t / sigma_t) for t in [eps, T].

        Raises:
            DomainError: If t lies outside [eps, T].
        """
        arr = self._check_time(t, lower=self.eps)
        log_alpha = -0.25 * arr**2 * (self.beta_max - self.beta_min) - 0.5 * arr * self.beta_min
        log_sigma = 0.5 * np.log(-np.expm1(2.0 * log_alpha))
        return _as_output(log_alpha - log_sigma, t)

    @property
    def lambda_range(self) -> tuple[float, float]:
        """Return (lambda_T, lambda_eps)."""
        return self.lambda_of_t(self.T), self.lambda_of_t(self.eps)

    def t_of_lambda(self, lam: ArrayLike) -> ArrayLike:
        """
        Invert lambda_t.

        Uses alpha_t^2 = 1 / (1 + e^{-2 lambda}) and solves the quadratic in t of
        the VP exponent in the cancellation-free form.

        Raises:
            DomainError: If lambda lies outside [lambda_T, lambda_eps].
        """
        arr = np.asarray(lam, dtype=float)
        lam_T, lam_eps = self.lambda_range
        slack = 1e-9 * max(1.0, abs(lam_T), abs(lam_eps))
        if (
            not np.all(np.isfinite(arr))
            or np.any(arr < lam_T - slack)
            or np.any(arr > lam_eps + slack)
        ):
            raise DomainError(f"log-SNR {lam!r} outside [{lam_T}, {lam_eps}]")
        neg_two_log_alpha = np.logaddexp(-2.0 * arr, 0.0)
        delta_beta = self.beta_max - self.beta_min
        t = 2.0 * neg_two_log_alpha / (
            np.sqrt(self.beta_min**2 + 2.0 * delta_beta * neg_two_log_alpha) + self.beta_min
        )
        return _as_output(np.clip(t, self.eps, self.T), lam)

    # SDE coefficients

    def beta(self, t: ArrayLike) -> ArrayLike:
        arr = self._check_time(t)
        return _as_output(self.beta_min + arr * (self.beta_max - self.beta_min), t)

    def drift_diffusion(self, t: ArrayLike) -> tuple[ArrayLike, ArrayLike]:
        """
        Compute f(t) = d log alpha_t / dt and g^2(t) = d sigma_t^2/dt - 2 f(t) sigma_t^2.

        For the VP family these reduce to f = -beta(t)/2 and g^2 = beta(t).

        Returns:
            Tuple (f_t, g2_t) with g2_t >= 0.
        """
        beta = np.asarray(self.beta(t))
        return _as_output(-0.5 * beta, t), _as_output(beta, t)

    def dlog_sigma_dlambda(self, t: ArrayLike) -> ArrayLike:
        """
        Compute d log sigma / d lambda = -(g^2 + 2 f sigma^2) / g^2.

        This is the linear coefficient of the probability-flow ODE written in
        lambda with the data-prediction parameterisation; it equals -alpha_t^2
        for the VP family.
        """
        f, g2 = (np.asarray(v) for v in self.drift_diffusion(t))
        sigma2 = np.asarray(self.sigma(t)) ** 2
        return _as_output(-(g2 + 2.0 * f * sigma2) / g2, t)

    # Intermediate time

    def solve_t_star(self, C_s: float, m: int) -> float:
        """
        Find t* in [eps, T] with sigma_{t*} / alpha_{t*} = C_s / sqrt(m).

        The ratio is strictly increasing, so the root is unique. Targets above
        sigma_T / alpha_T clip to T and targets below sigma_eps / alpha_eps clip
        to eps.

        Args:
            C_s: Positive tuning constant.
            m: Number of measurements (>= 1).

        Returns:
            The intermediate time t*.

        Raises:
            ArgumentError: If C_s <= 0 or m < 1.
        """
        if not (C_s > 0 and math.isfinite(C_s)):
            raise ArgumentError(f"C_s must be a positive finite number, got {C_s}")
        if m < 1:
            raise ArgumentError(f"m must be >= 1, got {m}")

        target = C_s / math.sqrt(m)
        if target >= self.snr_ratio(self.T):
            logger.debug(f"t* clipped to T: C_s/sqrt(m)={target:.6g}")
            return self.T
        if target <= self.snr_ratio(self.eps):
            logger.debug(f"t* clipped to eps: C_s/sqrt(m)={target:.6g}")
            return self.eps

        t_star = brentq(
            lambda t: self.snr_ratio(t) - target,
            self.eps,
            self.T,
            xtol=_T_STAR_XTOL,
            rtol=4 * np.finfo(float).eps,
            maxiter=500,
        )
        logger.debug(f"t*={t_star:.12g} for C_s={C_s}, m={m}")
        return float(t_star)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """
    Discretisation T = t_0 > t_1 > ... > t_N = eps shared by samplers and inverters.

    Node-wise alpha, sigma and lambda are precomputed; ``h[i - 1]`` holds
    h_i = lambda_{t_i} - lambda_{t_{i-1}} for i in 1..N.
    """

    schedule: NoiseSchedule
    nodes: np.ndarray
    spacing: str = "uniform-t"

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ArgumentError("a time grid needs at least two nodes")
        if nodes[0] != self.schedule.T or nodes[-1] != self.schedule.eps:
            raise ArgumentError("grid endpoints must equal T and eps exactly")
        if np.any(np.diff(nodes) >= 0):
            raise ArgumentError("grid nodes must be strictly decreasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        for name, values in (
            ("alphas", self.schedule.alpha(nodes)),
            ("sigmas", self.schedule.sigma(nodes)),
            ("lambdas", self.schedule.lambda_of_t(nodes)),
        ):
            values = np.asarray(values, dtype=float)
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.lambdas)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    def step_ratio(self, i: int) -> float:
        """Return r_i = h_{i-1} / h_i for i >= 2."""
        if not 2 <= i <= self.N:
            raise ArgumentError(f"step ratio needs 2 <= i <= {self.N}, got {i}")
        h = self.h
        return float(h[i - 2] / h[i - 1])


def _segment_nodes(
    schedule: NoiseSchedule, start: float, stop: float, steps: int, spacing: Spacing
) -> np.ndarray:
    """Nodes from ``start`` down to ``stop`` (inclusive) with ``steps`` intervals."""
    if spacing == "uniform-t":
        nodes = np.linspace(start, stop, steps + 1)
    elif spacing == "uniform-lambda":
        lambdas = np.linspace(schedule.lambda_of_t(start), schedule.lambda_of_t(stop), steps + 1)
        nodes = np.asarray(schedule.t_of_lambda(lambdas))
    elif spacing == "quadratic-t":
        nodes = np.linspace(math.sqrt(start), math.sqrt(stop), steps + 1) ** 2
    else:
        raise ArgumentError(f"unsupported grid spacing {spacing!r}")
    nodes[0], nodes[-1] = start, stop
    return nodes


def _spacing_coordinate(schedule: NoiseSchedule, t: float, spacing: Spacing) -> float:
    if spacing == "uniform-lambda":
        return schedule.lambda_of_t(t)
    if spacing == "quadratic-t":
        return math.sqrt(t)
    return t


def make_grid(
    schedule: NoiseSchedule,
    N: int,
    spacing: Spacing = "uniform-t",
    anchor: Optional[float] = None,
) -> TimeGrid:
    """
    Build a time grid over [eps, T].

    Args:
        schedule: Noise schedule supplying T, eps and lambda_t.
        N: Number of sub-intervals (>= 1).
        spacing: 'uniform-t' (equal t-steps), 'uniform-lambda' (equal h_i) or
            'quadratic-t' (equal steps in sqrt(t)).
        anchor: Optional time in (eps, T) that must appear as an exact node.
            The N steps are split between [anchor, T] and [eps, anchor] in
            proportion to their length in the spacing coordinate.

    Returns:
        TimeGrid with nodes[0] == T and nodes[-1] == eps.

    Raises:
        ArgumentError: If N < 1, the spacing is unknown, or the anchor is invalid.

    Example:
        grid = make_grid(NoiseSchedule(), 50)
        assert grid.nodes[1] == pytest.approx(1 - 0.999 / 50)
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ArgumentError(f"grid needs N >= 1 steps, got {N!r}")
    N = int(N)

    if anchor is None or anchor >= schedule.T or anchor <= schedule.eps:
        if anchor is not None and not (schedule.eps <= anchor <= schedule.T):
            raise ArgumentError(f"anchor {anchor} outside [eps, T]")
        nodes = _segment_nodes(schedule, schedule.T, schedule.eps, N, spacing)
        return TimeGrid(schedule=schedule, nodes=nodes, spacing=spacing)

    if N < 2:
        raise ArgumentError("an anchored grid needs N >= 2")
    top = abs(
        _spacing_coordinate(schedule, schedule.T, spacing)
        - _spacing_coordinate(schedule, anchor, spacing)
    )
    bottom = abs(
        _spacing_coordinate(schedule, anchor, spacing)
        - _spacing_coordinate(schedule, schedule.eps, spacing)
    )
    upper_steps = int(round(N * top / (top + bottom)))
    upper_steps = min(max(upper_steps, 1), N - 1)
    upper = _segment_nodes(schedule, schedule.T, anchor, upper_steps, spacing)
    lower = _segment_nodes(schedule, anchor, schedule.eps, N - upper_steps, spacing)
    nodes = np.concatenate([upper, lower[1:]])
    return TimeGrid(schedule=schedule, nodes=nodes, spacing=spacing)
