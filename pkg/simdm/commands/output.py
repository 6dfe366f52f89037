"""CSV emission: UTF-8, LF line endings, floats with 9 significant digits."""

import csv
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Union

from simdm.models import ResultRow

RESULT_COLUMNS = [
    "seed",
    "method",
    "link",
    "n",
    "m",
    "sigma",
    "C_s",
    "C_s_prime",
    "N_inv",
    "N_samp",
    "t_star",
    "nfe",
    "cosine",
    "rel_l2",
    "psnr",
    "wall_ms",
]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    return str(value)


def write_csv(
    path: Union[str, Path], fieldnames: Sequence[str], rows: Iterable[dict[str, Any]]
) -> Path:
    """Write dict rows under an exact header; missing keys become empty cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
    return path


def write_results(path: Union[str, Path], rows: Iterable[ResultRow]) -> Path:
    return write_csv(path, RESULT_COLUMNS, (row.model_dump(by_alias=True) for row in rows))
