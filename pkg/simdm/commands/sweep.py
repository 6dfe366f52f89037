"""The ``sweep`` command: full-factorial C_s x C_s' (and NFE) grid over recover runs."""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from simdm.commands.output import write_csv, write_results
from simdm.commands.recover import build_tasks, execute, require_recovery
from simdm.errors import ConfigError
from simdm.models import ExperimentConfig, ResultRow

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "method",
    "C_s",
    "C_s_prime",
    "N_samp",
    "N_inv",
    "trials",
    "median_cosine",
    "best",
]


@dataclass(frozen=True)
class SweepCell:
    c_s: Optional[float]
    c_s_prime: Optional[float]
    n_samp: Optional[int]
    n_inv: Optional[int]


def sweep_cells(config: ExperimentConfig) -> list[SweepCell]:
    """
    Expand the sweep block into cells.

    Unswept constants take their value from the recovery block; unswept step
    counts stay None so each method resolves its own grid.

    Raises:
        ConfigError: If the sweep block is missing or every axis is empty.
    """
    sweep = config.sweep
    if sweep is None or not (sweep.c_s or sweep.c_s_prime or sweep.n_samp or sweep.n_inv):
        raise ConfigError("sweep: at least one non-empty axis is required", ["sweep"])
    recovery = require_recovery(config)
    axes = (
        sweep.c_s or [recovery.c_s],
        sweep.c_s_prime or [recovery.c_s_prime],
        sweep.n_samp or [None],
        sweep.n_inv or [None],
    )
    return [SweepCell(*values) for values in itertools.product(*axes)]


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Median cosine per (method, cell); ``best`` marks each method's argmax cell."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row.method, row.c_s, row.c_s_prime, row.n_samp, row.n_inv)
        groups.setdefault(key, []).append(row.cosine)

    summary = [
        {
            "method": key[0],
            "C_s": key[1],
            "C_s_prime": key[2],
            "N_samp": key[3],
            "N_inv": key[4],
            "trials": len(values),
            "median_cosine": float(np.median(values)),
            "best": False,
        }
        for key, values in groups.items()
    ]
    for method in {entry["method"] for entry in summary}:
        candidates = [entry for entry in summary if entry["method"] == method]
        max(candidates, key=lambda entry: entry["median_cosine"])["best"] = True
    return summary


def summary_path(output: Path) -> Path:
    return output.with_name(f"{output.stem}.summary.csv")


def cmd_sweep(config: ExperimentConfig, jobs: int = 1) -> tuple[list[ResultRow], list[dict]]:
    """
    Run every sweep cell and write result rows plus the per-cell summary.

    Returns:
        Tuple of (result rows, summary entries).
    """
    cells = sweep_cells(config)
    tasks = [
        task
        for cell in cells
        for task in build_tasks(config, cell.c_s, cell.c_s_prime, cell.n_samp, cell.n_inv)
    ]
    logger.info(f"sweep: {len(cells)} cells, {len(tasks)} instances, jobs={jobs}")
    outcomes = execute(tasks, jobs, desc="sweep")
    rows = [row for outcome in outcomes for row in outcome.rows]
    output = write_results(config.run.output, rows)

    summary = summarize(rows)
    write_csv(summary_path(output), SUMMARY_COLUMNS, summary)
    for entry in summary:
        if entry["best"]:
            logger.info(
                f"sweep: best {entry['method']} at C_s={entry['C_s']}, "
                f"C_s_prime={entry['C_s_prime']}, N_samp={entry['N_samp']}, "
                f"N_inv={entry['N_inv']} (median cosine {entry['median_cosine']:.4f})"
            )
    return rows, summary
