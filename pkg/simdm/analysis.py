"""Metrics, Lipschitz certificates, Monte Carlo bound checks and convergence studies."""

import logging
import math
from collections.abc import Callable, Sequence
from typing import Optional

import numpy as np

from simdm.errors import ArgumentError
from simdm.inversion import Inverter
from simdm.measurements import (
    estimate_m2_m4,
    estimate_mu,
    exact_link_moments,
    make_instance,
    make_rng,
)
from simdm.models import (
    BoundCheckReport,
    Lemma2Report,
    LinkSpec,
    LipschitzReport,
    RecoveryMetrics,
    Theorem1Report,
)
from simdm.predictors import DataPredictor, GaussianPriorPredictor
from simdm.schedule import NoiseSchedule, Spacing, TimeGrid, make_grid
from simdm.solvers import Sampler, estimate_order, reference_solve

logger = logging.getLogger(__name__)

REFERENCE_STEPS = 8192

# Errors below this are treated as exact and excluded from order fits.
_EXACT_FLOOR = 1e-13


def _quantiles(values: np.ndarray) -> dict[str, float]:
    return {
        "q50": float(np.quantile(values, 0.5)),
        "q90": float(np.quantile(values, 0.9)),
        "q99": float(np.quantile(values, 0.99)),
        "max": float(np.max(values)),
    }


# Metrics


def metrics(
    x_hat: np.ndarray, x_star: np.ndarray, peak: Optional[float] = None
) -> RecoveryMetrics:
    """
    Direction-only quality of an estimate.

    Args:
        x_hat: Raw estimate; only its direction is compared.
        x_star: Ground truth (non-zero).
        peak: PSNR peak value; defaults to max(x_star) - min(x_star).

    Returns:
        RecoveryMetrics with cosine similarity, rel_l2 = ||x_hat/||x_hat|| - x*|| / ||x*||
        and PSNR (inf when the normalised estimate equals x_star). A zero
        estimate yields cosine 0 and ``degenerate=True``.

    Raises:
        ArgumentError: If x_star is zero or the shapes differ.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x_hat.shape != x_star.shape:
        raise ArgumentError(f"shape mismatch: x_hat {x_hat.shape} vs x_star {x_star.shape}")
    star_norm = float(np.linalg.norm(x_star))
    if star_norm == 0.0:
        raise ArgumentError("x_star must be non-zero")

    hat_norm = float(np.linalg.norm(x_hat))
    degenerate = hat_norm == 0.0 or not math.isfinite(hat_norm)
    direction = np.zeros_like(x_hat) if degenerate else x_hat / hat_norm

    cosine = 0.0 if degenerate else float(np.dot(direction, x_star) / star_norm)
    residual = direction - x_star
    rel_l2 = float(np.linalg.norm(residual) / star_norm)

    if peak is None:
        peak = float(np.max(x_star) - np.min(x_star)) or float(np.max(np.abs(x_star)))
    mse = float(np.mean(residual**2))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(peak**2 / mse)
    return RecoveryMetrics(cosine=cosine, rel_l2=rel_l2, psnr=psnr, degenerate=degenerate)


# Lipschitz certificates


def _ddim_factors(grid: TimeGrid, predictor: DataPredictor) -> np.ndarray:
    lipschitz = np.array([predictor.lipschitz_at(t) for t in grid.nodes[:-1]])
    return grid.sigmas[1:] / grid.sigmas[:-1] - grid.alphas[1:] * np.expm1(-grid.h) * lipschitz


def lipschitz_ddim(grid: TimeGrid, predictor: DataPredictor) -> LipschitzReport:
    """
    Lipschitz constant of the DDIM generator G as the product of per-step factors.

    Each factor is

        sigma_i / sigma_{i-1} + sigma_i (alpha_i/sigma_i - alpha_{i-1}/sigma_{i-1}) L_{t_{i-1}}.
    """
    factors = _ddim_factors(grid, predictor)
    return LipschitzReport(method="ddim", per_step=factors.tolist(), L=float(np.prod(factors)))


def lipschitz_dm2m(grid: TimeGrid, predictor: DataPredictor) -> LipschitzReport:
    """
    Lipschitz constant of the DM2M generator via the two-term recursion.

    L~_0 = 1, L~_1 is the first DDIM factor, and for i >= 2
    L~_i = (sigma_i/sigma_{i-1} + a_i (1 + 1/(2 r_i)) L_{t_{i-1}}) L~_{i-1}
           + a_i (1/(2 r_i)) L_{t_{i-2}} L~_{i-2},
    with a_i = alpha_i (1 - e^{-h_i}).

    Returns:
        LipschitzReport whose ``per_step`` holds L~_1..L~_N and ``L`` = L~_N.

    Raises:
        ArgumentError: If the grid has fewer than two steps.
    """
    if grid.N < 2:
        raise ArgumentError("the dm2m recursion needs a grid with N >= 2")
    lipschitz = np.array([predictor.lipschitz_at(t) for t in grid.nodes[:-1]])
    ratios = grid.sigmas[1:] / grid.sigmas[:-1]
    gains = -grid.alphas[1:] * np.expm1(-grid.h)

    tilde = [1.0, float(ratios[0] + gains[0] * lipschitz[0])]
    for i in range(2, grid.N + 1):
        half_inv_r = 0.5 / grid.step_ratio(i)
        current = (ratios[i - 1] + gains[i - 1] * (1.0 + half_inv_r) * lipschitz[i - 1]) * tilde[
            i - 1
        ] + gains[i - 1] * half_inv_r * lipschitz[i - 2] * tilde[i - 2]
        tilde.append(float(current))
    return LipschitzReport(method="dm2m", per_step=tilde[1:], L=tilde[-1])


def empirical_expansion(
    fn: Callable[[np.ndarray], np.ndarray],
    dim: int,
    pairs: int = 200,
    seed: int = 0,
    scale: float = 1.0,
) -> float:
    """
    Largest observed ||fn(x1) - fn(x2)|| / ||x1 - x2|| over random Gaussian pairs.

    ``fn`` receives batches of shape (pairs, dim).
    """
    if pairs < 1:
        raise ArgumentError(f"pairs must be >= 1, got {pairs}")
    rng = make_rng(seed)
    x1 = scale * rng.standard_normal((pairs, dim))
    x2 = scale * rng.standard_normal((pairs, dim))
    gaps = np.linalg.norm(x1 - x2, axis=1)
    ratios = np.linalg.norm(fn(x1) - fn(x2), axis=1) / gaps
    return float(ratios.max())


# Monte Carlo bound checks


def verify_lemma1(n: int, C: float, trials: int = 100, seed: int = 0) -> BoundCheckReport:
    """
    Check ||eps||_inf <= C sqrt(log(2n)) for standard normal eps in R^n.

    Draws come from one seeded stream, so success counts are non-decreasing in C.

    Raises:
        ArgumentError: If trials < 100 or n < 1.
    """
    if trials < 100:
        raise ArgumentError(f"lemma1 needs trials >= 100, got {trials}")
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    sup_norms = np.abs(rng.standard_normal((trials, n))).max(axis=1)
    bound = C * math.sqrt(math.log(2 * n))
    successes = int(np.count_nonzero(sup_norms <= bound))
    logger.info(f"lemma1: {successes}/{trials} within {bound:.6g} (n={n}, C={C})")
    return BoundCheckReport(
        inequality=f"||eps||_inf <= {C:g} * sqrt(log(2*{n}))",
        trials=trials,
        successes=successes,
        bound=bound,
        constant=C,
        quantiles=_quantiles(sup_norms),
    )


def verify_lemma2(
    n: int,
    m_list: Sequence[int],
    link: LinkSpec,
    C_prime: float,
    trials: int = 50,
    seed: int = 0,
    mu_samples: int = 1_000_000,
    exact_moments: bool = False,
) -> Lemma2Report:
    """
    Check ||(1/m) A^T y - mu x*||_inf <= C' sqrt(log(2n)) / sqrt(m) over several m.

    Each trial draws x* uniformly on the sphere, a fresh Gaussian A and the
    link noise. The report carries per-m success counts, the log-log slope of
    the median error against m (about -1/2 in theory) and the frequency of the
    event (1/m) sum y_i^2 <= 2 M2. With ``exact_moments`` mu and M2 come from
    numerical integration instead of Monte Carlo.

    Raises:
        ArgumentError: If fewer than two m values are given or mu_samples < 1e6.
    """
    if len(m_list) < 2:
        raise ArgumentError("lemma2 needs at least two values of m to fit a slope")
    if mu_samples < 1_000_000:
        raise ArgumentError(f"mu must be estimated with >= 1e6 samples, got {mu_samples}")
    if exact_moments:
        mu, m2 = exact_link_moments(link)
    else:
        mu = estimate_mu(link, mu_samples, seed)
        m2, _ = estimate_m2_m4(link, mu_samples, seed + 1)
    direction_prior = GaussianPriorPredictor(NoiseSchedule(), np.zeros(n), np.ones(n))
    log_term = math.sqrt(math.log(2 * n))

    per_m: list[BoundCheckReport] = []
    medians: list[float] = []
    e1_hits = 0
    for index, m in enumerate(m_list):
        errors = np.empty(trials)
        for trial in range(trials):
            instance = make_instance(
                n, m, link, direction_prior, seed=seed + 2 + index * trials + trial
            )
            b = instance.A.T @ instance.y / m
            errors[trial] = np.abs(b - mu * instance.x_star).max()
            e1_hits += int(np.mean(instance.y**2) <= 2.0 * m2)
        bound = C_prime * log_term / math.sqrt(m)
        per_m.append(
            BoundCheckReport(
                inequality=f"||A^T y/m - mu x*||_inf <= {C_prime:g} * sqrt(log(2*{n})) / sqrt({m})",
                trials=trials,
                successes=int(np.count_nonzero(errors <= bound)),
                bound=bound,
                constant=C_prime,
                quantiles=_quantiles(errors),
                m=m,
            )
        )
        medians.append(float(np.median(errors)))
        logger.debug(f"lemma2: m={m} median error {medians[-1]:.6g}")

    slope, _ = np.polyfit(np.log(np.asarray(m_list, float)), np.log(medians), 1)
    logger.info(f"lemma2: mu={mu:.6g}, slope={slope:.4f}")
    return Lemma2Report(
        link=link.kind,
        n=n,
        mu=mu,
        per_m=per_m,
        median_errors=medians,
        slope=float(slope),
        e1_rate=e1_hits / (trials * len(m_list)),
    )


# Convergence studies


def theorem1_curve(
    predictor: DataPredictor,
    grid_sizes: Sequence[int],
    t: float,
    k1: int = 2,
    k2: int = 2,
    seed: int = 0,
    batch: int = 8,
    spacing: Spacing = "uniform-lambda",
    reference_steps: int = REFERENCE_STEPS,
) -> Theorem1Report:
    """
    Error of G o G-dagger_t against the exact flow from t to eps.

    A batch x_t is drawn from q_t. The oracle x_eps is the reference solution
    of the probability-flow ODE from t to eps. For every grid size the grid is
    anchored at t, inverted with order k1 (first_order/second_order) and
    sampled with order k2 (ddim/dm2m).

    Args:
        predictor: Analytic predictor with an exact marginal sampler.
        grid_sizes: At least three step counts.
        t: Intermediate time in (eps, T].
        k1: Inversion order, 1 or 2.
        k2: Sampling order, 1 or 2.
        seed: Seed of the x_t draw.
        batch: Number of x_t samples; the error is the mean l2 norm.
        spacing: Grid spacing; uniform-lambda makes h_max shrink like 1/N.
        reference_steps: RK4 steps of the oracle.

    Returns:
        Theorem1Report with (h_max, error) points and the fitted order, or
        ``order=None`` when every error is at round-off level.

    Raises:
        ArgumentError: If fewer than three grid sizes or an unknown order is given.
    """
    if len(grid_sizes) < 3:
        raise ArgumentError(f"need at least 3 grid sizes, got {len(grid_sizes)}")
    if k1 not in (1, 2) or k2 not in (1, 2):
        raise ArgumentError(f"orders must be 1 or 2, got k1={k1}, k2={k2}")
    schedule = predictor.schedule
    x_t = predictor.sample_marginal(make_rng(seed), t, batch)
    x_eps = reference_solve(predictor, schedule, x_t, t, schedule.eps, reference_steps)

    points: list[tuple[float, float]] = []
    for N in grid_sizes:
        grid = make_grid(schedule, N, spacing, anchor=t)
        inverter = Inverter(predictor, grid, "first_order" if k1 == 1 else "second_order")
        sampler = Sampler(predictor, grid, "ddim" if k2 == 1 else "dm2m")
        estimate = sampler.sample_full(inverter.invert_partial(x_t, t))
        error = float(np.mean(np.linalg.norm(estimate - x_eps, axis=-1)))
        points.append((grid.h_max, error))
        logger.debug(f"theorem1: t={t}, N={N}, h_max={grid.h_max:.4g}, error={error:.4g}")

    fit = [(h, e) for h, e in points if e > _EXACT_FLOOR]
    order = estimate_order(fit) if len(fit) >= 3 else None
    return Theorem1Report(t=t, k1=k1, k2=k2, points=points, order=order)


def roundtrip_study(
    predictor: DataPredictor,
    grid_sizes: Sequence[int],
    samples: int = 8,
    seed: int = 0,
    spacing: Spacing = "uniform-t",
    sampler_method: str = "ddim",
    inverter_method: str = "first_order",
) -> list[tuple[int, float]]:
    """
    Maximum relative round-trip error ||G(G-dagger(x)) - x|| / ||x|| per grid size.

    Inputs are drawn from q_eps of the predictor's prior.
    """
    schedule = predictor.schedule
    x = predictor.sample_marginal(make_rng(seed), schedule.eps, samples)
    norms = np.linalg.norm(x, axis=-1)
    results: list[tuple[int, float]] = []
    for N in grid_sizes:
        grid = make_grid(schedule, N, spacing)
        inverter = Inverter(predictor, grid, inverter_method)
        sampler = Sampler(predictor, grid, sampler_method)
        roundtrip = sampler.sample_full(inverter.invert_full(x))
        error = float(np.max(np.linalg.norm(roundtrip - x, axis=-1) / norms))
        results.append((N, error))
    return results
