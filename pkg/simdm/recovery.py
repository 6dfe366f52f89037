"""The three single-index-model estimators built from back-projection, inversion and sampling."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from simdm.errors import ArgumentError, NumericalError
from simdm.inversion import Inverter, InverterMethod
from simdm.measurements import back_project
from simdm.models import ExperimentConfig, RecoveryMethod
from simdm.predictors import DataPredictor, NFECounter
from simdm.schedule import NoiseSchedule, Spacing, TimeGrid, make_grid
from simdm.solvers import Sampler, SamplerMethod

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    """Raw estimate x_hat (not normalised), the intermediate time used and predictor calls made."""

    x_hat: np.ndarray
    t_star: float
    nfe: int


def build_grids(
    schedule: NoiseSchedule, n_samp: int, n_inv: Optional[int], spacing: Spacing
) -> tuple[TimeGrid, TimeGrid]:
    """
    Build the sampling and inversion grids.

    Both come from one schedule and spacing; they are the same object when the
    step counts agree.
    """
    sampling = make_grid(schedule, n_samp, spacing)
    if n_inv is None or n_inv == n_samp:
        return sampling, sampling
    return sampling, make_grid(schedule, n_inv, spacing)


class Estimator:
    """
    Link-agnostic estimators of the direction of x* from (A, y).

    - ``recover_dms``: partial sampling G_{t*} of the scaled back-projection.
    - ``recover_dmis``: partial inversion G-dagger_{t*} then full sampling G.
    - ``recover_dmfis``: full inversion G-dagger of the unscaled back-projection
      then full sampling.

    The back-projection (1/m) A^T y is scaled by alpha_{t*} C_s' for the first
    two, where t* solves sigma_t / alpha_t = C_s / sqrt(m).

    Args:
        sampler: Sampler over the sampling grid.
        inverter: Inverter over the inversion grid. Required for sim_dmis and
            sim_dmfis; sim_dms ignores it.
        c_s: Positive constant selecting t*.
        c_s_prime: Positive scale applied to the back-projection.

    Example:
        estimator = Estimator(sampler, inverter, c_s=1.25, c_s_prime=1.25)
        result = estimator.recover_dmis(A, y)
    """

    def __init__(
        self,
        sampler: Sampler,
        inverter: Optional[Inverter] = None,
        c_s: Optional[float] = None,
        c_s_prime: Optional[float] = None,
    ):
        if inverter is not None and inverter.grid.schedule != sampler.grid.schedule:
            raise ArgumentError("sampler and inverter must share one noise schedule")
        self.sampler = sampler
        self.inverter = inverter
        self.c_s = c_s
        self.c_s_prime = c_s_prime

    @property
    def schedule(self) -> NoiseSchedule:
        return self.sampler.grid.schedule

    @classmethod
    def from_config(
        cls,
        config: ExperimentConfig,
        predictor: DataPredictor,
        c_s: Optional[float] = None,
        c_s_prime: Optional[float] = None,
        n_samp: Optional[int] = None,
        n_inv: Optional[int] = None,
        method: Optional[RecoveryMethod] = None,
    ) -> "Estimator":
        """
        Assemble an estimator from a validated config.

        Step counts come from the explicit arguments (a sweep cell), then the
        ``grid.<method>`` block when ``method`` is given, then the grid block.
        """
        grid_block = config.grid
        recovery = config.recovery
        base_samp, base_inv = grid_block.steps_for(method)
        steps_samp = n_samp if n_samp is not None else base_samp
        steps_inv = n_inv if n_inv is not None else base_inv
        if steps_inv is None:
            steps_inv = steps_samp
        sampling, inversion = build_grids(
            config.schedule, steps_samp, steps_inv, grid_block.spacing
        )
        sampler_method: SamplerMethod = grid_block.sampler
        inverter_method: InverterMethod = grid_block.inverter
        return cls(
            Sampler(predictor, sampling, sampler_method),
            Inverter(predictor, inversion, inverter_method),
            c_s=c_s if c_s is not None else (recovery.c_s if recovery else None),
            c_s_prime=(
                c_s_prime if c_s_prime is not None else (recovery.c_s_prime if recovery else None)
            ),
        )

    # Building blocks

    def _require_inverter(self) -> Inverter:
        if self.inverter is None:
            raise ArgumentError("this estimator needs an inverter")
        return self.inverter

    def _scaled_start(self, A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
        if self.c_s is None or self.c_s_prime is None:
            raise ArgumentError("C_s and C_s_prime must both be set for sim_dms and sim_dmis")
        if self.c_s_prime <= 0:
            raise ArgumentError(f"C_s_prime must be positive, got {self.c_s_prime}")
        b = self._back_projection(A, y)
        t_star = self.schedule.solve_t_star(self.c_s, np.shape(A)[0])
        scale = self.schedule.alpha(t_star) * self.c_s_prime
        return scale * b, t_star

    def _back_projection(self, A: np.ndarray, y: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ArgumentError(f"incompatible shapes A {A.shape} and y {y.shape}")
        if A.shape[1] != self.sampler.predictor.dim:
            raise ArgumentError(
                f"A has {A.shape[1]} columns but the predictor works in dimension "
                f"{self.sampler.predictor.dim}"
            )
        return back_project(A, y)

    @staticmethod
    def _finish(x_hat: np.ndarray, t_star: float, counter: NFECounter, method: str):
        if not np.all(np.isfinite(x_hat)):
            raise NumericalError(f"{method} produced non-finite values (t*={t_star:.6g})")
        return RecoveryResult(x_hat=x_hat, t_star=t_star, nfe=counter.count)

    # Estimators

    def recover_dms(self, A: np.ndarray, y: np.ndarray) -> RecoveryResult:
        """Compute x_hat = G_{t*}(alpha_{t*} C_s' (1/m) A^T y)."""
        start, t_star = self._scaled_start(A, y)
        counter = NFECounter()
        x_hat = self.sampler.sample_partial(start, t_star, counter)
        logger.debug(f"sim_dms: t*={t_star:.6g}, nfe={counter.count}")
        return self._finish(x_hat, t_star, counter, "sim_dms")

    def recover_dmis(self, A: np.ndarray, y: np.ndarray) -> RecoveryResult:
        """Compute x_hat = G(G-dagger_{t*}(alpha_{t*} C_s' (1/m) A^T y))."""
        inverter = self._require_inverter()
        start, t_star = self._scaled_start(A, y)
        counter = NFECounter()
        latent = inverter.invert_partial(start, t_star, counter)
        x_hat = self.sampler.sample_full(latent, counter)
        logger.debug(f"sim_dmis: t*={t_star:.6g}, nfe={counter.count}")
        return self._finish(x_hat, t_star, counter, "sim_dmis")

    def recover_dmfis(self, A: np.ndarray, y: np.ndarray) -> RecoveryResult:
        """Compute x_hat = G(G-dagger((1/m) A^T y)); C_s and C_s' are not used."""
        inverter = self._require_inverter()
        b = self._back_projection(A, y)
        counter = NFECounter()
        latent = inverter.invert_full(b, counter)
        x_hat = self.sampler.sample_full(latent, counter)
        return self._finish(x_hat, self.schedule.eps, counter, "sim_dmfis")

    def nfe_budget(self, method: RecoveryMethod) -> int:
        """
        Nominal evaluation budget of a method: N_samp for sim_dms, N_inv + N_samp otherwise.

        Partial operators may use fewer calls; ``RecoveryResult.nfe`` holds the
        calls actually made.
        """
        if method == "sim_dms":
            return self.sampler.grid.N
        return self._require_inverter().grid.N + self.sampler.grid.N

    def recover(self, method: RecoveryMethod, A: np.ndarray, y: np.ndarray) -> RecoveryResult:
        if method == "sim_dms":
            return self.recover_dms(A, y)
        if method == "sim_dmis":
            return self.recover_dmis(A, y)
        if method == "sim_dmfis":
            return self.recover_dmfis(A, y)
        raise ArgumentError(f"unsupported recovery method {method!r}")
