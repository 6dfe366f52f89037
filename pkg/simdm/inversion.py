"""Inversion direction: naive DDIM, first- and second-order inversion, G-dagger and G-dagger_t."""

import logging
from typing import Literal, Optional

import numpy as np

from simdm.errors import ArgumentError
from simdm.predictors import DataPredictor, NFECounter
from simdm.schedule import TimeGrid
from simdm.solvers import first_order_update, second_order_update

logger = logging.getLogger(__name__)

InverterMethod = Literal["naive_ddim", "first_order", "second_order"]


class Inverter:
    """
    Retrace the probability-flow ODE from eps toward T over a fixed grid.

    Step v_i maps an iterate at t_i to t_{i-1}. The naive DDIM step evaluates
    the predictor at (x_{t_i}, t_{i-1}); the first-order step at (x_{t_i}, t_i).
    The second-order step mirrors the DM2M multistep formula along the reversed
    grid, using the predictor output at the previous inversion iterate
    (time t_{i+1}) as history; the first step of every run is first order.

    Args:
        predictor: Data-prediction function x_theta.
        grid: Time grid shared with the sampler when step counts agree.
        method: 'naive_ddim', 'first_order' or 'second_order'.
    """

    def __init__(
        self,
        predictor: DataPredictor,
        grid: TimeGrid,
        method: InverterMethod = "second_order",
    ):
        if method not in ("naive_ddim", "first_order", "second_order"):
            raise ArgumentError(f"unsupported inversion method {method!r}")
        if method == "second_order" and grid.N < 2:
            raise ArgumentError("second-order inversion needs a grid with N >= 2")
        if predictor.schedule != grid.schedule:
            raise ArgumentError("predictor and grid must share one noise schedule")
        self.predictor = predictor
        self.grid = grid
        self.method = method

    def _evaluate(self, x: np.ndarray, node: int, counter: Optional[NFECounter]) -> np.ndarray:
        if counter is not None:
            counter.add()
        return self.predictor.predict(x, self.grid.nodes[node])

    def _check_step(self, i: int, highest: Optional[int] = None) -> None:
        highest = self.grid.N if highest is None else highest
        if not 1 <= i <= highest:
            raise ArgumentError(f"inversion step index {i} outside [1, {highest}]")

    def naive_inv_step(
        self, x: np.ndarray, i: int, counter: Optional[NFECounter] = None
    ) -> np.ndarray:
        """Move x from t_i to t_{i-1}, predictor evaluated at (x, t_{i-1})."""
        self._check_step(i)
        x = np.asarray(x, dtype=float)
        return first_order_update(self.grid, x, i, i - 1, self._evaluate(x, i - 1, counter))

    def first_order_inv_step(
        self, x: np.ndarray, i: int, counter: Optional[NFECounter] = None
    ) -> np.ndarray:
        """Move x from t_i to t_{i-1}, predictor evaluated at (x, t_i)."""
        self._check_step(i)
        x = np.asarray(x, dtype=float)
        return first_order_update(self.grid, x, i, i - 1, self._evaluate(x, i, counter))

    def second_order_inv_step(
        self,
        x: np.ndarray,
        x_next: Optional[np.ndarray],
        i: int,
        counter: Optional[NFECounter] = None,
    ) -> np.ndarray:
        """
        Move x from t_i to t_{i-1} with the multistep inversion update.

        Args:
            x: Iterate at t_i.
            x_next: Previous inversion iterate at t_{i+1}.
            i: Step index in [1, N - 1].

        Raises:
            ArgumentError: If the history iterate is missing or i = N.
        """
        if x_next is None:
            raise ArgumentError("second-order inversion step needs the iterate at t_{i+1}")
        self._check_step(i, highest=self.grid.N - 1)
        x = np.asarray(x, dtype=float)
        denoised = self._evaluate(x, i, counter)
        denoised_next = self._evaluate(np.asarray(x_next, dtype=float), i + 1, counter)
        return second_order_update(self.grid, x, i, i - 1, i + 1, denoised, denoised_next)

    def end_index(self, t: float) -> int:
        """
        Return j_t = min{j in [N] : t_j <= t}, or 0 when t = T (no steps).

        Raises:
            ArgumentError: If t lies outside [eps, T].
        """
        schedule = self.grid.schedule
        if not np.isfinite(t) or t < schedule.eps - 1e-12 or t > schedule.T + 1e-12:
            raise ArgumentError(f"partial inversion time {t} outside [eps, T]")
        if t >= schedule.T:
            return 0
        below = int(np.count_nonzero(self.grid.nodes[1:] <= t))
        return self.grid.N - max(below, 1) + 1

    def _run(self, x: np.ndarray, start: int, counter: Optional[NFECounter]) -> np.ndarray:
        x = np.array(x, dtype=float)
        denoised_prev: Optional[np.ndarray] = None
        for i in range(start, 0, -1):
            if self.method == "naive_ddim":
                x = first_order_update(self.grid, x, i, i - 1, self._evaluate(x, i - 1, counter))
                continue
            denoised = self._evaluate(x, i, counter)
            if self.method == "second_order" and denoised_prev is not None:
                x = second_order_update(self.grid, x, i, i - 1, i + 1, denoised, denoised_prev)
            else:
                x = first_order_update(self.grid, x, i, i - 1, denoised)
            denoised_prev = denoised
        return x

    def invert_full(self, x_eps: np.ndarray, counter: Optional[NFECounter] = None) -> np.ndarray:
        """Apply G-dagger = v_1 o v_2 o ... o v_N to x_eps."""
        return self._run(x_eps, self.grid.N, counter)

    def invert_partial(
        self, x: np.ndarray, t: float, counter: Optional[NFECounter] = None
    ) -> np.ndarray:
        """
        Apply G-dagger_t = v_1 o ... o v_{j_t}; returns x unchanged for t = T.

        The input is treated as an iterate at node t_{j_t}. A warning is logged
        when that node lies more than one mean log-SNR step from t, which happens
        on coarse uniform-t grids when t falls in the last interval above eps.
        """
        end = self.end_index(t)
        logger.debug(f"partial inversion from t={t:.6g}: steps {end}..1")
        if end > 0:
            offset = self.start_offset(t)
            mean_step = self.mean_step()
            if offset > mean_step:
                logger.warning(
                    f"partial inversion from t={t:.6g} starts at node "
                    f"t_{end}={self.grid.nodes[end]:.6g}, {offset:.3g} in log-SNR away "
                    f"(mean step {mean_step:.3g}); use a finer or uniform-lambda grid"
                )
        return self._run(x, end, counter)

    def start_offset(self, t: float) -> float:
        """Log-SNR distance |lambda_t - lambda_{t_{j_t}}| to the first inversion node."""
        end = self.end_index(t)
        return abs(float(self.grid.schedule.lambda_of_t(t)) - float(self.grid.lambdas[end]))

    def mean_step(self) -> float:
        return float(self.grid.lambdas[-1] - self.grid.lambdas[0]) / self.grid.N
