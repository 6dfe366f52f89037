"""Plain-text vector and matrix files.

Line 1 holds ``n`` for vectors or ``rows cols`` for matrices; the values follow
whitespace-separated with 17 significant digits.
"""

from pathlib import Path
from typing import Union

import numpy as np

from simdm.errors import ArgumentError

PathLike = Union[str, Path]

_FORMAT = "%.17g"


def write_vector(path: PathLike, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1:
        raise ArgumentError(f"expected a vector, got shape {vector.shape}")
    body = " ".join(_FORMAT % value for value in vector)
    Path(path).write_text(f"{vector.size}\n{body}\n", encoding="utf-8", newline="\n")


def write_matrix(path: PathLike, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ArgumentError(f"expected a matrix, got shape {matrix.shape}")
    rows = "\n".join(" ".join(_FORMAT % value for value in row) for row in matrix)
    Path(path).write_text(
        f"{matrix.shape[0]} {matrix.shape[1]}\n{rows}\n", encoding="utf-8", newline="\n"
    )


def _read(path: PathLike) -> tuple[list[int], np.ndarray]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ArgumentError(f"cannot read {path}: {e}") from e
    if not lines:
        raise ArgumentError(f"{path} is empty")
    try:
        header = [int(token) for token in lines[0].split()]
        values = np.array(" ".join(lines[1:]).split(), dtype=float)
    except ValueError as e:
        raise ArgumentError(f"{path} is not in the vector/matrix text format: {e}") from e
    return header, values


def read_vector(path: PathLike) -> np.ndarray:
    """
    Read a vector file.

    Raises:
        ArgumentError: If the file is missing, malformed, or the count disagrees
            with the header.
    """
    header, values = _read(path)
    if len(header) != 1:
        raise ArgumentError(f"{path}: vector header must be a single count")
    if values.size != header[0]:
        raise ArgumentError(f"{path}: header says {header[0]} values, found {values.size}")
    return values


def read_matrix(path: PathLike) -> np.ndarray:
    header, values = _read(path)
    if len(header) != 2:
        raise ArgumentError(f"{path}: matrix header must be 'rows cols'")
    rows, cols = header
    if values.size != rows * cols:
        raise ArgumentError(f"{path}: header says {rows}x{cols}, found {values.size} values")
    return values.reshape(rows, cols)
