"""Analytic data-prediction functions x_theta(x, t) for exactly known priors."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import softmax

from simdm.errors import ArgumentError, DomainError
from simdm.schedule import NoiseSchedule

logger = logging.getLogger(__name__)

Size = Optional[Union[int, tuple[int, ...]]]


@dataclass
class NFECounter:
    """Counts predictor evaluations; one call counts once whatever the batch size."""

    count: int = 0

    def add(self, calls: int = 1) -> None:
        self.count += calls


class DataPredictor(ABC):
    """
    Base class for data-prediction functions.

    Subclasses implement the exact posterior mean E[x_0 | x_t = x] of their
    prior together with a per-time Lipschitz constant L_t. Inputs may be a
    single vector of shape (n,) or a batch of shape (B, n).
    """

    kind: str = "abstract"

    def __init__(self, schedule: NoiseSchedule, dim: int):
        if dim < 1:
            raise ArgumentError(f"predictor dimension must be >= 1, got {dim}")
        self.schedule = schedule
        self.dim = dim

    def _check_input(self, x: np.ndarray, t: float) -> tuple[np.ndarray, float]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ArgumentError(f"expected vectors of length {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ArgumentError("predictor input contains non-finite values")
        t = float(t)
        if not (self.schedule.eps - 1e-12 <= t <= self.schedule.T + 1e-12):
            raise DomainError(f"time {t} outside [{self.schedule.eps}, {self.schedule.T}]")
        return x, t

    def predict(self, x: np.ndarray, t: float) -> np.ndarray:
        """
        Evaluate x_theta(x, t).

        Args:
            x: Vector (n,) or batch (B, n) at time t.
            t: Time in [eps, T].

        Returns:
            Array with the shape of x.

        Raises:
            ArgumentError: If x is non-finite or has the wrong length.
            DomainError: If t lies outside [eps, T].
        """
        x, t = self._check_input(x, t)
        return self._predict(x, t)

    def noise_from_data(self, x: np.ndarray, t: float) -> np.ndarray:
        """
        Convert to the noise prediction (x - alpha_t x_theta(x, t)) / sigma_t.

        Raises:
            DomainError: If sigma_t = 0.
        """
        sigma = self.schedule.sigma(t)
        if sigma == 0.0:
            raise DomainError(f"noise prediction undefined at t={t} where sigma_t = 0")
        alpha = self.schedule.alpha(t)
        return (np.asarray(x, dtype=float) - alpha * self.predict(x, t)) / sigma

    def sample_marginal(
        self, rng: np.random.Generator, t: float, size: Size = None
    ) -> np.ndarray:
        """Draw from q_t = law of alpha_t x_0 + sigma_t z with x_0 from the prior."""
        x0 = self.sample_prior(rng, size)
        noise = rng.standard_normal(x0.shape)
        return self.schedule.alpha(t) * x0 + self.schedule.sigma(t) * noise

    def _batch_shape(self, size: Size) -> tuple[int, ...]:
        if size is None:
            return ()
        if isinstance(size, int):
            return (size,)
        return tuple(size)

    @abstractmethod
    def _predict(self, x: np.ndarray, t: float) -> np.ndarray: ...

    @abstractmethod
    def lipschitz_at(self, t: float) -> float:
        """Return L_t with ||x_theta(x1, t) - x_theta(x2, t)|| <= L_t ||x1 - x2||."""

    @abstractmethod
    def sample_prior(self, rng: np.random.Generator, size: Size = None) -> np.ndarray:
        """Draw from q_0."""


class ConstantPredictor(DataPredictor):
    """Point-mass prior q_0 = delta_c; exponential integrators are exact for it."""

    kind = "constant"

    def __init__(self, schedule: NoiseSchedule, c: np.ndarray):
        c = np.asarray(c, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ArgumentError("constant predictor needs a finite vector c")
        super().__init__(schedule, c.size)
        self.c = c

    def _predict(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(self.c, x.shape).copy()

    def lipschitz_at(self, t: float) -> float:
        return 0.0

    def sample_prior(self, rng: np.random.Generator, size: Size = None) -> np.ndarray:
        return np.broadcast_to(self.c, self._batch_shape(size) + (self.dim,)).copy()


class GaussianPriorPredictor(DataPredictor):
    """
    Diagonal Gaussian prior N(m0, diag(s^2)).

    The posterior mean is coordinate-wise affine:
    x_theta_k(x, t) = (alpha_t s_k^2 x_k + sigma_t^2 m0_k) / (alpha_t^2 s_k^2 + sigma_t^2).
    """

    kind = "gaussian"

    def __init__(self, schedule: NoiseSchedule, mean: np.ndarray, variance: np.ndarray):
        mean = np.asarray(mean, dtype=float)
        variance = np.broadcast_to(np.asarray(variance, dtype=float), mean.shape).copy()
        if mean.ndim != 1:
            raise ArgumentError("gaussian prior mean must be a vector")
        if np.any(variance <= 0) or not np.all(np.isfinite(variance)):
            raise ArgumentError("gaussian prior variances must be positive and finite")
        super().__init__(schedule, mean.size)
        self.mean = mean
        self.variance = variance

    def _coefficients(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        alpha, sigma = self.schedule.alpha(t), self.schedule.sigma(t)
        denom = alpha**2 * self.variance + sigma**2
        return alpha * self.variance / denom, sigma**2 * self.mean / denom

    def _predict(self, x: np.ndarray, t: float) -> np.ndarray:
        slope, offset = self._coefficients(t)
        return slope * x + offset

    def lipschitz_at(self, t: float) -> float:
        slope, _ = self._coefficients(t)
        return float(slope.max())

    def sample_prior(self, rng: np.random.Generator, size: Size = None) -> np.ndarray:
        shape = self._batch_shape(size) + (self.dim,)
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(shape)

    def exact_flow(self, x: np.ndarray, t_from: float, t_to: float) -> np.ndarray:
        """
        Transport x along the exact probability-flow ODE from t_from to t_to.

        Along the flow the standardised coordinate
        z = (x_t - alpha_t m0) / sqrt(alpha_t^2 s^2 + sigma_t^2) is invariant.
        """
        a_from, s_from = self.schedule.alpha(t_from), self.schedule.sigma(t_from)
        a_to, s_to = self.schedule.alpha(t_to), self.schedule.sigma(t_to)
        z = (np.asarray(x, dtype=float) - a_from * self.mean) / np.sqrt(
            a_from**2 * self.variance + s_from**2
        )
        return a_to * self.mean + np.sqrt(a_to**2 * self.variance + s_to**2) * z


class GMMPriorPredictor(DataPredictor):
    """
    Diagonal Gaussian-mixture prior sum_k w_k N(mu_k, diag(s_k^2)).

    The posterior mean mixes the per-component Gaussian posterior means with
    the responsibilities of the marginals N(alpha_t mu_k, diag(alpha_t^2 s_k^2 + sigma_t^2)).
    """

    kind = "gmm"

    def __init__(
        self,
        schedule: NoiseSchedule,
        weights: np.ndarray,
        means: np.ndarray,
        variances: np.ndarray,
    ):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape).copy()
        if weights.shape != (means.shape[0],):
            raise ArgumentError("gmm needs one weight per component mean")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-9):
            raise ArgumentError("gmm weights must be non-negative and sum to 1")
        if np.any(variances <= 0) or not np.all(np.isfinite(variances)):
            raise ArgumentError("gmm component variances must be positive and finite")
        super().__init__(schedule, means.shape[1])
        self.weights = weights / weights.sum()
        self.means = means
        self.variances = variances
        self._log_weights = np.log(np.where(self.weights > 0, self.weights, np.finfo(float).tiny))

    @classmethod
    def well_separated(
        cls,
        schedule: NoiseSchedule,
        n: int,
        components: int,
        variance: float,
        seed: int = 0,
    ) -> "GMMPriorPredictor":
        """
        Build an equal-weight mixture whose means are orthonormal unit vectors.

        Args:
            schedule: Noise schedule.
            n: Ambient dimension.
            components: Number of modes K (<= n).
            variance: Shared isotropic component variance.
            seed: Seed of the random orthonormal frame.
        """
        if not 1 <= components <= n:
            raise ArgumentError(f"need 1 <= components <= n, got {components} for n={n}")
        rng = np.random.Generator(np.random.Philox(seed))
        q, _ = np.linalg.qr(rng.standard_normal((n, components)))
        return cls(
            schedule,
            weights=np.full(components, 1.0 / components),
            means=q.T,
            variances=np.full((components, n), variance),
        )

    @property
    def components(self) -> int:
        return self.means.shape[0]

    def _marginals(self, t: float) -> tuple[float, float, np.ndarray]:
        alpha, sigma = self.schedule.alpha(t), self.schedule.sigma(t)
        return alpha, sigma, alpha**2 * self.variances + sigma**2

    def _log_likelihoods(self, x: np.ndarray, t: float) -> np.ndarray:
        alpha, _, marginal_var = self._marginals(t)
        diff = x[..., None, :] - alpha * self.means
        return (
            self._log_weights
            - 0.5 * np.sum(np.log(2.0 * np.pi * marginal_var), axis=-1)
            - 0.5 * np.sum(diff**2 / marginal_var, axis=-1)
        )

    def responsibilities(self, x: np.ndarray, t: float) -> np.ndarray:
        """Posterior component probabilities, shape (..., K), computed in log space."""
        x, t = self._check_input(x, t)
        return softmax(self._log_likelihoods(x, t), axis=-1)

    def _predict(self, x: np.ndarray, t: float) -> np.ndarray:
        alpha, sigma, marginal_var = self._marginals(t)
        rho = softmax(self._log_likelihoods(x, t), axis=-1)
        component_means = (
            alpha * self.variances * x[..., None, :] + sigma**2 * self.means
        ) / marginal_var
        return np.sum(rho[..., None] * component_means, axis=-2)

    def lipschitz_at(self, t: float) -> float:
        """
        Upper bound max_k L_t^(k) + max(sigma^2/v) * max(alpha/v) * diam(mu)^2 / 4.

        The second term bounds the covariance under the responsibilities between
        component posterior means and log-likelihood gradients. It is a certified
        bound when all components share one variance vector.
        """
        alpha, sigma, marginal_var = self._marginals(t)
        within = float(np.max(alpha * self.variances / marginal_var))
        if self.components == 1:
            return within
        diffs = self.means[:, None, :] - self.means[None, :, :]
        diameter = float(np.sqrt(np.max(np.sum(diffs**2, axis=-1))))
        spread = float(np.max(sigma**2 / marginal_var)) * float(np.max(alpha / marginal_var))
        if not np.allclose(self.variances, self.variances[0]):
            logger.debug("gmm components have unequal variances; Lipschitz bound is heuristic")
        return within + spread * diameter**2 / 4.0

    def sample_prior(self, rng: np.random.Generator, size: Size = None) -> np.ndarray:
        shape = self._batch_shape(size)
        labels = rng.choice(self.components, size=shape, p=self.weights)
        noise = rng.standard_normal(shape + (self.dim,))
        return self.means[labels] + np.sqrt(self.variances[labels]) * noise
