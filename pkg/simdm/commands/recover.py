"""The ``recover`` command: run the estimators over trials and write result rows."""

import logging
import sys
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from simdm.analysis import metrics
from simdm.commands.output import write_results
from simdm.errors import ArgumentError, ConfigError
from simdm.measurements import make_instance
from simdm.models import ExperimentConfig, RecoveryConfig, ResultRow
from simdm.recovery import Estimator
from simdm.textio import read_vector, write_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrialTask:
    """One (trial, m) unit of work; every configured method runs on the same instance."""

    config: ExperimentConfig
    trial: int
    m: int
    c_s: Optional[float] = None
    c_s_prime: Optional[float] = None
    n_samp: Optional[int] = None
    n_inv: Optional[int] = None
    x_star: Optional[np.ndarray] = None

    @property
    def seed(self) -> int:
        return self.config.run.base_seed + self.trial


@dataclass
class TrialOutcome:
    task: TrialTask
    rows: list[ResultRow] = field(default_factory=list)
    estimates: list[np.ndarray] = field(default_factory=list)


def require_recovery(config: ExperimentConfig) -> RecoveryConfig:
    if config.recovery is None:
        raise ConfigError("recovery: block required for recover and sweep", ["recovery"])
    return config.recovery


def load_x_star(config: ExperimentConfig) -> Optional[np.ndarray]:
    """Read the explicit ground truth named by run.x_star_file, if any."""
    if config.run.x_star_file is None:
        return None
    x_star = read_vector(config.run.x_star_file)
    if x_star.size != config.run.n:
        raise ArgumentError(
            f"{config.run.x_star_file} holds {x_star.size} values, expected run.n = {config.run.n}"
        )
    return x_star


def run_trial(task: TrialTask) -> TrialOutcome:
    """
    Generate one instance and run every configured estimator on it.

    wall_ms covers the estimator call only.
    """
    config = task.config
    recovery = require_recovery(config)
    predictor = config.build_predictor()
    source = task.x_star if task.x_star is not None else predictor
    instance = make_instance(config.run.n, task.m, config.link, source, task.seed)
    outcome = TrialOutcome(task=task)
    for method in recovery.method:
        estimator = Estimator.from_config(
            config,
            predictor,
            c_s=task.c_s,
            c_s_prime=task.c_s_prime,
            n_samp=task.n_samp,
            n_inv=task.n_inv,
            method=method,
        )
        started = time.perf_counter()
        result = estimator.recover(method, instance.A, instance.y)
        wall_ms = (time.perf_counter() - started) * 1e3
        logger.debug(f"{method} trial {task.trial}, m={task.m}: {result.nfe} predictor calls")
        quality = metrics(result.x_hat, instance.x_star, config.run.peak)
        outcome.rows.append(
            ResultRow(
                seed=task.seed,
                method=method,
                link=config.link.kind,
                n=config.run.n,
                m=task.m,
                sigma=config.link.sigma,
                C_s=estimator.c_s,
                C_s_prime=estimator.c_s_prime,
                N_inv=estimator.inverter.grid.N,
                N_samp=estimator.sampler.grid.N,
                t_star=result.t_star,
                nfe=estimator.nfe_budget(method),
                cosine=quality.cosine,
                rel_l2=quality.rel_l2,
                psnr=quality.psnr,
                wall_ms=wall_ms,
            )
        )
        outcome.estimates.append(result.x_hat)
    return outcome


def build_tasks(
    config: ExperimentConfig,
    c_s: Optional[float] = None,
    c_s_prime: Optional[float] = None,
    n_samp: Optional[int] = None,
    n_inv: Optional[int] = None,
) -> list[TrialTask]:
    """Tasks in output order: trial-major, then m in the configured order."""
    x_star = load_x_star(config)
    return [
        TrialTask(config, trial, m, c_s, c_s_prime, n_samp, n_inv, x_star)
        for trial in range(config.run.trials)
        for m in config.run.m_list
    ]


def execute(tasks: Sequence[TrialTask], jobs: int = 1, desc: str = "trials") -> list[TrialOutcome]:
    """
    Run tasks on a process pool of ``jobs`` workers.

    Outcomes come back in task order regardless of completion order; jobs=1
    runs inline.
    """
    progress = {"total": len(tasks), "desc": desc, "disable": not sys.stderr.isatty()}
    if jobs <= 1 or len(tasks) <= 1:
        return [run_trial(task) for task in tqdm(tasks, **progress)]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(tqdm(pool.map(run_trial, tasks), **progress))


def dump_estimates(output: Path, outcomes: Sequence[TrialOutcome]) -> list[Path]:
    """Write each x_hat next to the CSV as <stem>.trial<k>.m<m>.<method>.txt."""
    written = []
    for outcome in outcomes:
        for row, x_hat in zip(outcome.rows, outcome.estimates):
            path = output.with_name(
                f"{output.stem}.trial{outcome.task.trial}.m{row.m}.{row.method}.txt"
            )
            write_vector(path, x_hat)
            written.append(path)
    return written


def cmd_recover(config: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """
    Run all trials of a recover experiment and write the result CSV.

    Args:
        config: Validated configuration with a recovery block.
        jobs: Worker processes.

    Returns:
        Result rows in trial order.

    Raises:
        ConfigError: If the recovery block is missing.
        NumericalError: If an estimator produced non-finite values.
    """
    recovery = require_recovery(config)
    tasks = build_tasks(config)
    logger.info(
        f"recover: {len(tasks)} instances x {len(recovery.method)} methods, jobs={jobs}"
    )
    outcomes = execute(tasks, jobs, desc="recover")
    rows = [row for outcome in outcomes for row in outcome.rows]
    output = write_results(config.run.output, rows)
    if config.run.dump_vectors:
        dump_estimates(output, outcomes)
    logger.info(f"recover: wrote {len(rows)} rows to {output}")
    return rows
