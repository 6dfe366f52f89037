"""Sampling direction: DDIM and DM2M steps, the generator G and partial generators G_t."""

import logging
from collections.abc import Sequence
from typing import Literal, Optional

import numpy as np

from simdm.errors import ArgumentError
from simdm.predictors import DataPredictor, NFECounter
from simdm.schedule import NoiseSchedule, TimeGrid

logger = logging.getLogger(__name__)

SamplerMethod = Literal["ddim", "dm2m"]

DEFAULT_REFERENCE_STEPS = 4096


# Exponential-integrator updates shared with the inversion module. ``src`` and
# ``dst`` are node indices; the same formulas move toward smaller t (sampling)
# or larger t (inversion).


def first_order_update(
    grid: TimeGrid, x: np.ndarray, src: int, dst: int, denoised: np.ndarray
) -> np.ndarray:
    """x_dst = (sigma_dst/sigma_src) x + sigma_dst (alpha_dst/sigma_dst - alpha_src/sigma_src) d."""
    h = grid.lambdas[dst] - grid.lambdas[src]
    return (grid.sigmas[dst] / grid.sigmas[src]) * x - grid.alphas[dst] * np.expm1(-h) * denoised


def second_order_update(
    grid: TimeGrid,
    x: np.ndarray,
    src: int,
    dst: int,
    prev: int,
    denoised: np.ndarray,
    denoised_prev: np.ndarray,
) -> np.ndarray:
    """Multistep update with h = lambda_dst - lambda_src and r = (lambda_src - lambda_prev) / h."""
    h = grid.lambdas[dst] - grid.lambdas[src]
    r = (grid.lambdas[src] - grid.lambdas[prev]) / h
    combined = (1.0 + 0.5 / r) * denoised - (0.5 / r) * denoised_prev
    return (grid.sigmas[dst] / grid.sigmas[src]) * x - grid.alphas[dst] * np.expm1(-h) * combined


class Sampler:
    """
    Probability-flow ODE sampler over a fixed time grid.

    Args:
        predictor: Data-prediction function x_theta.
        grid: Time grid T = t_0 > ... > t_N = eps.
        method: 'ddim' (first order) or 'dm2m' (second-order multistep,
            warm-started by one DDIM step).

    Example:
        sampler = Sampler(predictor, make_grid(schedule, 50), method="dm2m")
        x_eps = sampler.sample_full(x_T)
    """

    def __init__(self, predictor: DataPredictor, grid: TimeGrid, method: SamplerMethod = "ddim"):
        if method not in ("ddim", "dm2m"):
            raise ArgumentError(f"unsupported sampler method {method!r}")
        if method == "dm2m" and grid.N < 2:
            raise ArgumentError("dm2m sampling needs a grid with N >= 2")
        if predictor.schedule != grid.schedule:
            raise ArgumentError("predictor and grid must share one noise schedule")
        self.predictor = predictor
        self.grid = grid
        self.method = method

    def _evaluate(self, x: np.ndarray, node: int, counter: Optional[NFECounter]) -> np.ndarray:
        if counter is not None:
            counter.add()
        return self.predictor.predict(x, self.grid.nodes[node])

    def _check_step(self, i: int, lowest: int = 1) -> None:
        if not lowest <= i <= self.grid.N:
            raise ArgumentError(f"step index {i} outside [{lowest}, {self.grid.N}]")

    def ddim_step(
        self, x: np.ndarray, i: int, counter: Optional[NFECounter] = None
    ) -> np.ndarray:
        """
        Apply kappa_i: move x from t_{i-1} to t_i with the DDIM update.

        Raises:
            ArgumentError: If i is not in [1, N].
        """
        self._check_step(i)
        x = np.asarray(x, dtype=float)
        return first_order_update(self.grid, x, i - 1, i, self._evaluate(x, i - 1, counter))

    def dm2m_step(
        self,
        x: np.ndarray,
        x_prev: np.ndarray,
        i: int,
        counter: Optional[NFECounter] = None,
    ) -> np.ndarray:
        """
        Apply the second-order multistep update from t_{i-1} to t_i.

        Args:
            x: Iterate at t_{i-1}.
            x_prev: Iterate at t_{i-2}.
            i: Step index, i >= 2.

        Raises:
            ArgumentError: If i < 2 (use ddim_step for the first step).
        """
        if i < 2:
            raise ArgumentError("dm2m_step needs i >= 2; use ddim_step for i = 1")
        self._check_step(i, lowest=2)
        x = np.asarray(x, dtype=float)
        denoised = self._evaluate(x, i - 1, counter)
        denoised_prev = self._evaluate(np.asarray(x_prev, dtype=float), i - 2, counter)
        return second_order_update(self.grid, x, i - 1, i, i - 2, denoised, denoised_prev)

    def start_index(self, t: float) -> int:
        """
        Return i_t = max{i in [N] : t_{i-1} >= t}.

        Times above T clamp to full sampling.

        Raises:
            ArgumentError: If t is below eps or not finite.
        """
        schedule = self.grid.schedule
        if not np.isfinite(t) or t < schedule.eps - 1e-12:
            raise ArgumentError(f"partial sampling time {t} outside [eps, T]")
        if t > schedule.T:
            logger.warning(f"partial sampling time {t} above T; clamping to full sampling")
            return 1
        prefix = int(np.count_nonzero(self.grid.nodes >= t))
        return min(prefix, self.grid.N)

    def _run(self, x: np.ndarray, start: int, counter: Optional[NFECounter]) -> np.ndarray:
        x = np.array(x, dtype=float)
        denoised_prev: Optional[np.ndarray] = None
        for i in range(start, self.grid.N + 1):
            denoised = self._evaluate(x, i - 1, counter)
            if self.method == "dm2m" and denoised_prev is not None:
                x = second_order_update(self.grid, x, i - 1, i, i - 2, denoised, denoised_prev)
            else:
                x = first_order_update(self.grid, x, i - 1, i, denoised)
            denoised_prev = denoised
        return x

    def sample_full(self, x_T: np.ndarray, counter: Optional[NFECounter] = None) -> np.ndarray:
        """Apply G = kappa_N o ... o kappa_1 to x_T."""
        return self._run(x_T, 1, counter)

    def sample_partial(
        self, x: np.ndarray, t: float, counter: Optional[NFECounter] = None
    ) -> np.ndarray:
        """Apply G_t = kappa_N o ... o kappa_{i_t}; G_T equals G."""
        start = self.start_index(t)
        logger.debug(f"partial sampling from t={t:.6g}: steps {start}..{self.grid.N}")
        return self._run(x, start, counter)


def reference_solve(
    predictor: DataPredictor,
    schedule: NoiseSchedule,
    x_from: np.ndarray,
    t_from: float,
    t_to: float,
    steps: int = DEFAULT_REFERENCE_STEPS,
) -> np.ndarray:
    """
    High-accuracy probability-flow solution used as the convergence oracle.

    Integrates dx/dlambda = (d log sigma / d lambda) x + alpha x_theta(x, t(lambda))
    with classical fixed-step RK4 in lambda. Works in either direction.

    Args:
        predictor: Data-prediction function.
        schedule: Noise schedule.
        x_from: State (n,) or batch (B, n) at t_from.
        t_from: Start time in [eps, T].
        t_to: End time in [eps, T].
        steps: Number of RK4 steps.

    Returns:
        State at t_to.
    """
    if steps < 1:
        raise ArgumentError(f"reference_solve needs steps >= 1, got {steps}")
    x = np.array(x_from, dtype=float)
    if t_from == t_to:
        return x

    lam_from, lam_to = schedule.lambda_of_t(t_from), schedule.lambda_of_t(t_to)
    h = (lam_to - lam_from) / steps
    # Even entries are step nodes, odd entries are midpoints.
    lams = lam_from + 0.5 * h * np.arange(2 * steps + 1)
    lams[-1] = lam_to
    times = np.asarray(schedule.t_of_lambda(lams))
    times[0], times[-1] = t_from, t_to
    linear = np.asarray(schedule.dlog_sigma_dlambda(times))
    alphas = np.asarray(schedule.alpha(times))

    def rhs(state: np.ndarray, k: int) -> np.ndarray:
        return linear[k] * state + alphas[k] * predictor.predict(state, times[k])

    for step in range(steps):
        k = 2 * step
        k1 = rhs(x, k)
        k2 = rhs(x + 0.5 * h * k1, k + 1)
        k3 = rhs(x + 0.5 * h * k2, k + 1)
        k4 = rhs(x + h * k3, k + 2)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def estimate_order(errors: Sequence[tuple[float, float]]) -> float:
    """
    Fit the empirical convergence order.

    Args:
        errors: Pairs (h_max, error), at least three, all positive.

    Returns:
        Least-squares slope of log(error) against log(h_max).

    Raises:
        ArgumentError: If fewer than three points or non-positive values are given.
    """
    if len(errors) < 3:
        raise ArgumentError(f"order estimation needs >= 3 points, got {len(errors)}")
    data = np.asarray(errors, dtype=float)
    if np.any(data <= 0) or not np.all(np.isfinite(data)):
        raise ArgumentError("order estimation needs positive finite (h_max, error) pairs")
    slope, _ = np.polyfit(np.log(data[:, 0]), np.log(data[:, 1]), 1)
    return float(slope)
