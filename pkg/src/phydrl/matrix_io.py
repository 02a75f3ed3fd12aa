"""Plain-text matrix interchange.

Files hold one matrix each: a header line ``# rows cols`` followed by
``rows`` lines of whitespace-separated numbers. Vectors are stored as
single-row matrices.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DimensionMismatch


def save_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    lines = [f"# {rows} {cols}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    header = [ln for ln in text if ln.strip().startswith("#")]
    if not header:
        raise ValueError(f"{path}: missing '# rows cols' header")
    rows, cols = (int(tok) for tok in header[0].lstrip("#").split()[:2])
    body = [ln.split() for ln in text if ln.strip() and not ln.strip().startswith("#")]
    M = np.array([[float(tok) for tok in row] for row in body], dtype=float)
    if M.size == 0:
        M = M.reshape(rows, cols)
    if M.shape != (rows, cols):
        raise DimensionMismatch(f"{path}: header says {rows}x{cols}, body is {M.shape}")
    return M
