"""Single-index-model instances, back-projection and link statistics."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate
from scipy.stats import norm

from simdm.errors import ArgumentError
from simdm.models import LinkSpec
from simdm.predictors import DataPredictor

logger = logging.getLogger(__name__)

# Monte Carlo draws are generated in blocks to bound memory for 1e7-sample runs.
_CHUNK = 1 << 20


def make_rng(seed: int) -> np.random.Generator:
    """Per-seed deterministic generator on the counter-based Philox stream."""
    return np.random.Generator(np.random.Philox(seed))


def _link_function(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return u
    if kind == "sign":
        # sign(0) := +1 keeps y in {-1, +1}
        return np.where(u >= 0, 1.0, -1.0)
    if kind == "cubic":
        return u**3
    raise ArgumentError(f"unsupported link kind {kind!r}")


def apply_link(link: LinkSpec, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Apply the link element-wise with Gaussian noise e ~ N(0, sigma^2).

    Pre-link noise gives f(z + e); post-link noise gives f(z) + e.
    """
    z = np.asarray(z, dtype=float)
    noise = rng.normal(0.0, link.sigma, size=z.shape) if link.sigma > 0 else np.zeros_like(z)
    if link.position == "pre":
        return _link_function(link.kind, z + noise)
    return _link_function(link.kind, z) + noise


@dataclass(frozen=True, eq=False)
class SimInstance:
    """Sensing matrix, unit-norm ground truth and observations y = f(A x*)."""

    A: np.ndarray
    x_star: np.ndarray
    y: np.ndarray
    link: LinkSpec
    seed: int

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def make_instance(
    n: int,
    m: int,
    link: LinkSpec,
    x_star_source: Union[np.ndarray, DataPredictor],
    seed: int,
) -> SimInstance:
    """
    Generate a single-index-model instance.

    Args:
        n: Signal dimension.
        m: Number of measurements.
        link: Link specification.
        x_star_source: Explicit vector (normalised here) or a predictor whose
            prior is sampled and projected onto the unit sphere.
        seed: Seed of the instance's random stream; equal seeds give
            bit-identical instances.

    Returns:
        SimInstance with ||x_star|| = 1.

    Raises:
        ArgumentError: If n or m is below 1, or x_star is zero or has the wrong length.
    """
    if n < 1 or m < 1:
        raise ArgumentError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = make_rng(seed)
    if isinstance(x_star_source, DataPredictor):
        raw = x_star_source.sample_prior(rng)
    else:
        raw = np.asarray(x_star_source, dtype=float)
    if raw.shape != (n,):
        raise ArgumentError(f"x_star must have shape ({n},), got {raw.shape}")
    scale = float(np.linalg.norm(raw))
    if not np.isfinite(scale) or scale == 0.0:
        raise ArgumentError("x_star must be a finite non-zero vector")
    x_star = raw / scale
    A = rng.standard_normal((m, n))
    y = apply_link(link, A @ x_star, rng)
    return SimInstance(A=A, x_star=x_star, y=y, link=link, seed=seed)


def back_project(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return (1/m) A^T y."""
    A = np.asarray(A, dtype=float)
    return A.T @ np.asarray(y, dtype=float) / A.shape[0]


def _draw_link_values(link: LinkSpec, samples: int, seed: int):
    if samples < 1:
        raise ArgumentError(f"samples must be >= 1, got {samples}")
    rng = make_rng(seed)
    remaining = samples
    while remaining > 0:
        size = min(remaining, _CHUNK)
        g = rng.standard_normal(size)
        yield g, apply_link(link, g, rng)
        remaining -= size


def estimate_mu(link: LinkSpec, samples: int = 1_000_000, seed: int = 0) -> float:
    """
    Monte Carlo estimate of mu = E[f(g) g] for g ~ N(0, 1).

    Example:
        estimate_mu(LinkSpec(kind="sign"))  # ~ sqrt(2 / pi)
    """
    total = 0.0
    for g, values in _draw_link_values(link, samples, seed):
        total += float(np.dot(values, g))
    return total / samples


def estimate_m2_m4(
    link: LinkSpec, samples: int = 1_000_000, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimates of M2 = E[f(g)^2] and M4 = E[f(g)^4]."""
    second = fourth = 0.0
    for _, values in _draw_link_values(link, samples, seed):
        squares = values**2
        second += float(squares.sum())
        fourth += float(np.dot(squares, squares))
    return second / samples, fourth / samples


def _conditional_moments(link: LinkSpec, g: float) -> tuple[float, float]:
    """E[y | g] and E[y^2 | g] over the link noise."""
    sigma = link.sigma
    if link.position == "post" or sigma == 0.0:
        clean = float(_link_function(link.kind, np.asarray(g)))
        return clean, clean**2 + (sigma**2 if link.position == "post" else 0.0)
    if link.kind == "sign":
        return 2.0 * norm.cdf(g / sigma) - 1.0, 1.0
    nodes, weights = np.polynomial.hermite_e.hermegauss(40)
    weights = weights / weights.sum()
    values = _link_function(link.kind, g + sigma * nodes)
    return float(np.dot(weights, values)), float(np.dot(weights, values**2))


def exact_link_moments(link: LinkSpec) -> tuple[float, float]:
    """
    Numerical-integration values of mu = E[f(g) g] and M2 = E[f(g)^2].

    The outer Gaussian integral is split at 0 where sign links jump.
    """

    def integrate_both_halves(fn) -> float:
        left, _ = integrate.quad(fn, -np.inf, 0.0, limit=200)
        right, _ = integrate.quad(fn, 0.0, np.inf, limit=200)
        return left + right

    mu = integrate_both_halves(lambda g: g * _conditional_moments(link, g)[0] * norm.pdf(g))
    m2 = integrate_both_halves(lambda g: _conditional_moments(link, g)[1] * norm.pdf(g))
    return mu, m2
