"""Starting points for EM: hierarchical partitions, k-means, and emEM.

Random draws use numpy's PCG64 generator. Every restart gets its own child
stream spawned from the master seed with :class:`numpy.random.SeedSequence`,
so results do not depend on how restarts are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataMatrix
from .gmm import FitError, GaussianMixture, ModelName, e_step, m_step
from .mbhac import Partition, cut_tree, mbhac_tree
from .transform import TransformKind, apply_transform

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class InitStrategy:
    """How EM is started. ``kind`` is one of mbhac, kmeans, emem, random."""

    kind: str = "mbhac"
    transform: TransformKind = TransformKind.SVD
    n_starts: int = 50
    n_short: int = 50
    short_iters: int = 5

    def __post_init__(self) -> None:
        if self.kind not in ("mbhac", "kmeans", "emem", "random"):
            raise ValueError(f"unknown init strategy {self.kind!r}")
        if self.n_starts < 1 or self.n_short < 1 or self.short_iters < 0:
            raise ValueError("restart counts must be positive")
        object.__setattr__(self, "transform", TransformKind.parse(self.transform))

    @classmethod
    def parse(cls, text: str, **kw) -> "InitStrategy":
        """Parse ``mbhac:<transform>``, ``kmeans``, ``emem`` or ``random``."""
        head, _, tail = text.lower().partition(":")
        if head == "mbhac":
            return cls("mbhac", TransformKind.parse(tail or "raw"), **kw)
        if tail:
            raise ValueError(f"strategy {head!r} takes no transform")
        return cls(head, **kw)

    @property
    def label(self) -> str:
        if self.kind == "mbhac":
            return "Default" if self.transform is TransformKind.RAW else self.transform.name
        return {"kmeans": "k-means", "emem": "emEM", "random": "random"}[self.kind]

    def __str__(self) -> str:
        return f"mbhac:{self.transform.value}" if self.kind == "mbhac" else self.kind


def generators(seed: int | np.random.SeedSequence, count: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(count)]


def init_mbhac(x: DataMatrix, kind: TransformKind | str, k: int) -> Partition:
    """Cut the merge tree of the transformed data at ``k`` clusters."""
    if not 1 <= k <= x.n:
        raise ValueError(f"k must be in 1..{x.n}")
    return cut_tree(mbhac_tree(apply_transform(x, kind)), k)


def _lloyd(xv: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
    n = xv.shape[0]
    k = centers.shape[0]
    labels = np.full(n, -1)
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((xv[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # farthest point from its own centre founds the empty cluster
            own = d2[np.arange(n), new]
            far = int(np.argmax(own))
            new[far] = j
            d2[far, :] = 0.0
            counts = np.bincount(new, minlength=k)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            centers[j] = xv[labels == j].mean(axis=0)
    wcss = float(sum(((xv[labels == j] - centers[j]) ** 2).sum() for j in range(k)))
    return labels, wcss


def kmeans_restarts(
    x: DataMatrix | np.ndarray, k: int, n_starts: int = 50, seed: int = 0
) -> list[tuple[np.ndarray, float]]:
    """Labels and within-cluster sum of squares of every Lloyd restart."""
    xv = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    n = xv.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    out = []
    for rng in generators(seed, n_starts):
        start = rng.choice(n, size=k, replace=False)
        out.append(_lloyd(xv, xv[start].copy()))
    return out


def init_kmeans(x: DataMatrix | np.ndarray, k: int, n_starts: int = 50, seed: int = 0) -> Partition:
    """Best of ``n_starts`` Lloyd runs by within-cluster sum of squares."""
    runs = kmeans_restarts(x, k, n_starts, seed)
    best = min(range(len(runs)), key=lambda i: runs[i][1])
    return Partition.from_labels(runs[best][0])


def wcss(x: DataMatrix | np.ndarray, part: Partition) -> float:
    xv = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    return float(
        sum(((xv[part.labels == j] - xv[part.labels == j].mean(axis=0)) ** 2).sum()
            for j in range(1, part.k + 1))
    )


def random_start(
    x: DataMatrix,
    k: int,
    seed: int | np.random.Generator = 0,
    model: ModelName | str | None = None,
) -> GaussianMixture:
    """Means at ``k`` distinct random rows, common diagonal covariance, equal weights.

    For spherical models the diagonal is replaced by its average so the start
    lies inside the model family.
    """
    xv = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    n, p = xv.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    rng = seed if isinstance(seed, np.random.Generator) else generators(seed, 1)[0]
    idx = rng.choice(n, size=k, replace=False)
    var = xv.var(axis=0)
    if model is not None and ModelName.parse(model) in (ModelName.EII, ModelName.VII):
        var = np.full(p, var.mean())
    cov = np.broadcast_to(np.diag(var), (k, p, p)).copy()
    return GaussianMixture(np.full(k, 1.0 / k), xv[idx], cov, model or ModelName.VVV)


def short_run(x: DataMatrix, g: GaussianMixture, model: ModelName, iters: int):
    """``iters`` EM iterations from ``g``; returns (mixture, loglik)."""
    r, ll = e_step(x, g)
    for _ in range(iters):
        g = m_step(x, r, model)
        r, ll = e_step(x, g)
    return g, ll


def init_emem(
    x: DataMatrix,
    k: int,
    model: ModelName | str,
    n_short: int = 50,
    short_iters: int = 5,
    seed: int = 0,
) -> GaussianMixture:
    """Best of ``n_short`` short EM runs from random starts (by log-likelihood).

    ``short_iters=0`` scores the random starts directly without iterating.
    """
    model = ModelName.parse(model)
    best, best_ll = None, -math.inf
    for rng in generators(seed, n_short):
        g0 = random_start(x, k, rng, model)
        try:
            g, ll = short_run(x, g0, model, short_iters)
        except FitError:
            continue
        if math.isfinite(ll) and ll > best_ll:
            best, best_ll = g, ll
    if best is None:
        raise FitError(f"all {n_short} short EM runs collapsed")
    return best
