"""Data ingestion and the shared linear-algebra pieces (centering, SVD, covariance).

Covariances use divisor ``n`` throughout, not ``n - 1``; results differ from
``np.cov`` defaults by the factor ``(n - 1) / n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` table of finite observations with named columns."""

    values: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError("data must be a 2-D array")
        n, p = values.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {i + 1}, column {j + 1}")
        names = tuple(self.column_names) or tuple(f"V{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} column names for {p} columns")
        if len(set(names)) != p:
            raise DataError("column names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def select(self, columns: Sequence[str | int]) -> "DataMatrix":
        """Return a new matrix with the given columns, in the given order."""
        idx = [self.column_names.index(c) if isinstance(c, str) else int(c) for c in columns]
        return DataMatrix(self.values[:, idx], tuple(self.column_names[i] for i in idx))

    def standardized(self) -> "DataMatrix":
        """Center and scale every column to unit variance (divisor n)."""
        return DataMatrix(scale_decompose(self).centered, self.column_names)


@dataclass(frozen=True)
class CenteredDecomposition:
    """Thin SVD of a centred data matrix, ``centered = U diag(d) V^T``."""

    centered: np.ndarray
    mean: np.ndarray
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


@dataclass(frozen=True)
class ScaledDecomposition(CenteredDecomposition):
    """Thin SVD of the centred matrix after dividing each column by its std."""

    scale: np.ndarray = field(default_factory=lambda: np.empty(0))


def load_csv(path: str | Path, has_header: bool = True) -> DataMatrix:
    """Read a comma-separated numeric file into a :class:`DataMatrix`.

    Cells must parse as finite floats; the first bad cell is reported by
    1-based row and column number (the header, if any, is row 1).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    names: tuple[str, ...] = ()
    offset = 1
    if has_header:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
        offset = 2
    width = len(names) if names else len(rows[0]) if rows else 0
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + offset} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: cannot parse {cell.strip()!r} at row {i + offset}, column {j + 1}"
                )
            values[i, j] = v
    return DataMatrix(values, names)


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each right singular vector made positive
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def _thin_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    if d.size == 0 or d[0] == 0.0:
        raise DataError("degenerate data: centred matrix has rank 0")
    cutoff = max(a.shape) * np.finfo(np.float64).eps * d[0]
    r = int(np.sum(d > cutoff))
    u, vt = _fix_signs(u[:, :r], vt[:r])
    return u, d[:r], vt.T


def center_decompose(x: DataMatrix) -> CenteredDecomposition:
    """SVD of ``X - 1 xbar^T`` with rank truncation and a fixed sign convention.

    Singular values below ``max(n, p) * eps * d_1`` are dropped from the rank.
    Each right singular vector is flipped so its largest-magnitude entry is
    positive.
    """
    mean = x.values.mean(axis=0)
    centered = x.values - mean
    u, d, v = _thin_svd(centered)
    return CenteredDecomposition(centered, mean, d, u, v)


def column_scale(x: DataMatrix) -> np.ndarray:
    """Per-column standard deviation with divisor n; zero variance is an error."""
    sd = np.sqrt(np.mean((x.values - x.values.mean(axis=0)) ** 2, axis=0))
    bad = np.flatnonzero(sd <= 0.0)
    if bad.size:
        raise DataError(f"column {x.column_names[bad[0]]!r} has zero variance")
    return sd


def scale_decompose(x: DataMatrix) -> ScaledDecomposition:
    """SVD of the centred data after dividing column j by its std ``s_j``."""
    sd = column_scale(x)
    mean = x.values.mean(axis=0)
    scaled = (x.values - mean) / sd
    u, d, v = _thin_svd(scaled)
    return ScaledDecomposition(scaled, mean, d, u, v, scale=sd)


def sample_covariance(x: DataMatrix | np.ndarray) -> np.ndarray:
    """Sample covariance ``Xc^T Xc / n`` (divisor n)."""
    values = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    xc = values - values.mean(axis=0)
    cov = xc.T @ xc / values.shape[0]
    return (cov + cov.T) / 2.0
