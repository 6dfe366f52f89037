"""The ``verify`` command: run one analysis check, write its report, enforce tolerances."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from simdm.analysis import (
    empirical_expansion,
    lipschitz_ddim,
    lipschitz_dm2m,
    roundtrip_study,
    theorem1_curve,
    verify_lemma1,
    verify_lemma2,
)
from simdm.commands.output import write_csv
from simdm.errors import ArgumentError, ToleranceError
from simdm.models import ExperimentConfig, VerifyTarget
from simdm.schedule import make_grid
from simdm.solvers import Sampler

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["check", "quantity", "value", "target", "passed"]

# Relative slack on Lipschitz certificates for round-off in the empirical ratio.
_LIPSCHITZ_SLACK = 1e-9


@dataclass
class Check:
    """One reported quantity; ``target`` is empty for purely informational rows."""

    check: str
    quantity: str
    value: float
    target: str = ""
    passed: bool = True

    def as_row(self) -> dict:
        return {
            "check": self.check,
            "quantity": self.quantity,
            "value": float(self.value),
            "target": self.target,
            "passed": self.passed,
        }


def check_lemma1(config: ExperimentConfig) -> list[Check]:
    settings = config.verify.lemma1
    report = verify_lemma1(settings.n, settings.C, settings.trials, config.run.base_seed)
    checks = [
        Check("lemma1", f"quantile[{name}]", value) for name, value in report.quantiles.items()
    ]
    checks.append(
        Check(
            "lemma1",
            "success_rate",
            report.success_rate,
            f">= 0.99 for {report.inequality}",
            report.success_rate >= 0.99,
        )
    )
    return checks


def check_lemma2(config: ExperimentConfig) -> list[Check]:
    settings = config.verify.lemma2
    report = verify_lemma2(
        settings.n,
        settings.m_list,
        config.link,
        settings.C_prime,
        settings.trials,
        config.run.base_seed,
        settings.mu_samples,
        settings.exact_moments,
    )
    checks = [Check("lemma2", "mu", report.mu)]
    for per_m, median in zip(report.per_m, report.median_errors):
        checks.append(Check("lemma2", f"median_error[m={per_m.m}]", median))
        checks.append(
            Check(
                "lemma2",
                f"success_rate[m={per_m.m}]",
                per_m.success_rate,
                f">= {settings.min_success_rate:g} for {per_m.inequality}",
                per_m.success_rate >= settings.min_success_rate,
            )
        )
    low, high = settings.slope_range
    checks.append(
        Check(
            "lemma2",
            "slope",
            report.slope,
            f"slope of log median error vs log m in [{low:g}, {high:g}]",
            low <= report.slope <= high,
        )
    )
    checks.append(Check("lemma2", "e1_rate", report.e1_rate))
    return checks


def check_lipschitz(config: ExperimentConfig) -> list[Check]:
    predictor = config.build_predictor()
    grid = make_grid(config.schedule, config.grid.n_samp, config.grid.spacing)
    pairs = config.verify.lipschitz.pairs
    checks = []
    certificates = [("ddim", lipschitz_ddim)]
    if grid.N >= 2:
        certificates.append(("dm2m", lipschitz_dm2m))
    for method, certify in certificates:
        report = certify(grid, predictor)
        sampler = Sampler(predictor, grid, method)
        observed = empirical_expansion(
            sampler.sample_full, predictor.dim, pairs, config.run.base_seed
        )
        limit = report.L * (1.0 + _LIPSCHITZ_SLACK)
        checks.append(Check("lipschitz", f"L[{method}]", report.L))
        checks.append(
            Check(
                "lipschitz",
                f"empirical_ratio[{method}]",
                observed,
                f"max ||G(x1)-G(x2)||/||x1-x2|| <= L(1+{_LIPSCHITZ_SLACK:g}) = {limit:.9g}",
                observed <= limit,
            )
        )
    return checks


def check_theorem1(config: ExperimentConfig) -> list[Check]:
    settings = config.verify.theorem1
    predictor = config.build_predictor()
    order_target = min(settings.k1, settings.k2) - settings.order_slack
    exact = config.verify.roundtrip.exact_tolerance
    checks = []
    for t in settings.t_list:
        report = theorem1_curve(
            predictor,
            settings.grid_sizes,
            t,
            settings.k1,
            settings.k2,
            config.run.base_seed,
            settings.batch,
        )
        for N, (h_max, error) in zip(settings.grid_sizes, report.points):
            checks.append(Check("theorem1", f"error[t={t:g},N={N},h_max={h_max:.4g}]", error))
        if report.order is None:
            worst = max(error for _, error in report.points)
            checks.append(
                Check("theorem1", f"max_error[t={t:g}]", worst, f"<= {exact:g}", worst <= exact)
            )
        else:
            checks.append(
                Check(
                    "theorem1",
                    f"order[t={t:g}]",
                    report.order,
                    f"fitted order >= {order_target:g}",
                    report.order >= order_target,
                )
            )
    return checks


def check_roundtrip(config: ExperimentConfig) -> list[Check]:
    settings = config.verify.roundtrip
    predictor = config.build_predictor()
    results = roundtrip_study(
        predictor,
        settings.grid_sizes,
        settings.samples,
        config.run.base_seed,
        config.grid.spacing,
        config.grid.sampler,
        config.grid.inverter,
    )
    checks = [Check("roundtrip", f"max_rel_error[N={N}]", error) for N, error in results]
    if predictor.kind == "constant":
        worst = max(error for _, error in results)
        checks.append(
            Check(
                "roundtrip",
                "max_rel_error",
                worst,
                f"<= {settings.exact_tolerance:g}",
                worst <= settings.exact_tolerance,
            )
        )
    else:
        first, last = results[0][1], results[-1][1]
        checks.append(
            Check(
                "roundtrip",
                "refinement_gain",
                first - last,
                "error at the finest grid <= error at the coarsest",
                last <= first,
            )
        )
    return checks


VERIFIERS: dict[str, Callable[[ExperimentConfig], list[Check]]] = {
    "lemma1": check_lemma1,
    "lemma2": check_lemma2,
    "lipschitz": check_lipschitz,
    "theorem1": check_theorem1,
    "roundtrip": check_roundtrip,
}


def cmd_verify(which: VerifyTarget, config: ExperimentConfig) -> list[Check]:
    """
    Run a verifier and write its report CSV to run.output.

    Returns:
        All checks when every asserted tolerance passes.

    Raises:
        ArgumentError: If ``which`` is not a known verifier.
        ToleranceError: After the report is written, naming the first failed target.
    """
    if which not in VERIFIERS:
        raise ArgumentError(f"unknown verifier {which!r}; choose from {', '.join(VERIFIERS)}")
    logger.info(f"verify: running {which}")
    checks = VERIFIERS[which](config)
    output = write_csv(Path(config.run.output), REPORT_COLUMNS, (c.as_row() for c in checks))
    logger.info(f"verify: wrote {len(checks)} rows to {output}")

    failed = [check for check in checks if not check.passed]
    if failed:
        first = failed[0]
        raise ToleranceError(
            f"{first.check} {first.quantity} = {first.value:.6g}, need {first.target}"
        )
    return checks
