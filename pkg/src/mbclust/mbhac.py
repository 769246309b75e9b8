"""Model-based hierarchical agglomeration and tree cutting.

Starting from singletons, the pair of clusters whose merge increases the
unconstrained Gaussian classification criterion ``sum_k n_k log|W_k / n_k|``
the least is merged at every step. While either cluster of a pair is too
small for a nonsingular scatter matrix (``n_k <= q`` or numerically singular
``W_k``), that pair is scored by the increase in total within-cluster sum of
squares instead, and all such pairs take precedence over log-determinant
pairs. Exact ties go to the pair with the smallest ``(min id, max id)``.

The inner loop lives in a compiled extension when available; set
``MBCLUST_PURE_PYTHON=1`` to force the numpy fallback. Both produce
identical trees.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _agglo_py
from .transform import TransformedData

try:
    if os.environ.get("MBCLUST_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _agglo_ext as _kernel

    BACKEND = "compiled"
except ImportError:
    _kernel = _agglo_py
    BACKEND = "python"

RIDGE = 1e-10
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class Partition:
    """Cluster labels ``1..k`` for ``n`` observations; every label is used."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        k = int(labels.max())
        if labels.min() < 1 or np.unique(labels).size != k:
            raise ValueError("labels must cover 1..k with no empty part")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return int(self.labels.max())

    @property
    def n(self) -> int:
        return self.labels.size

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Relabel arbitrary hashable labels to ``1..k`` by order of first appearance."""
        labels = np.asarray(labels)
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inv.ravel()] + 1)

    def canonical(self) -> "Partition":
        return Partition.from_labels(self.labels)

    def same_as(self, other: "Partition") -> bool:
        """True if both partitions agree up to a relabelling."""
        return self.n == other.n and np.array_equal(
            self.canonical().labels, other.canonical().labels
        )


@dataclass(frozen=True)
class MergeTree:
    """Merge history: step ``t`` joins ``left[t] < right[t]`` into id ``n + t``."""

    left: np.ndarray
    right: np.ndarray
    criterion: np.ndarray
    tier: np.ndarray
    leaf_count: int

    def __post_init__(self) -> None:
        for name in ("left", "right", "criterion", "tier"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def merges(self) -> list[tuple[int, int, int, float]]:
        n = self.leaf_count
        return [
            (int(a), int(b), n + t, float(c))
            for t, (a, b, c) in enumerate(zip(self.left, self.right, self.criterion))
        ]

    def cut(self, k: int) -> Partition:
        return cut_tree(self, k)


@dataclass
class ClusterSuffStats:
    """Count, mean and scatter matrix ``W`` of one cluster."""

    count: int
    mean: np.ndarray
    scatter: np.ndarray

    @classmethod
    def of(cls, rows: np.ndarray) -> "ClusterSuffStats":
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        mean = rows.mean(axis=0)
        xc = rows - mean
        return cls(rows.shape[0], mean, xc.T @ xc)

    def merge(self, other: "ClusterSuffStats") -> "ClusterSuffStats":
        na, nb = self.count, other.count
        nab = na + nb
        d = self.mean - other.mean
        w = self.scatter + other.scatter + (na * nb / nab) * np.outer(d, d)
        return ClusterSuffStats(nab, (na * self.mean + nb * other.mean) / nab, w)


def ridge_for(z: np.ndarray) -> float:
    """Absolute ridge added to ``W_k / n_k``: ``RIDGE * tr(W) / (n q)``."""
    n, q = z.shape
    zc = z - z.mean(axis=0)
    return RIDGE * float(np.sum(zc * zc)) / (n * q)


def mbhac_tree(z: TransformedData | np.ndarray, backend: str | None = None) -> MergeTree:
    """Build the full merge tree of the rows of ``z``.

    ``backend`` overrides the import-time choice: ``"python"`` or ``"compiled"``.
    """
    arr = z.z if isinstance(z, TransformedData) else np.asarray(z, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    n = arr.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    kernel = _kernel
    if backend == "python":
        kernel = _agglo_py
    elif backend == "compiled":
        from . import _agglo_ext as kernel  # noqa: F811
    left, right, cost, tier = kernel.agglomerate(arr, ridge_for(arr), SINGULAR_TOL)
    return MergeTree(left, right, cost, tier, n)


def cut_tree(tree: MergeTree, k: int) -> Partition:
    """Partition with ``k`` parts obtained by undoing the last ``k - 1`` merges.

    Labels are numbered by first appearance in observation order.
    """
    n = tree.leaf_count
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    parent = np.arange(2 * n - 1)
    for t in range(n - k):
        parent[tree.left[t]] = n + t
        parent[tree.right[t]] = n + t

    def root(i: int) -> int:
        r = i
        while parent[r] != r:
            r = parent[r]
        while parent[i] != r:
            parent[i], i = r, parent[i]
        return r

    roots = np.array([root(i) for i in range(n)])
    return Partition.from_labels(roots)
