"""BIC model selection over (model, k), parameter counting and the adjusted Rand index."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import DataMatrix
from .gmm import FitError, FitResult, ModelName, classify, em
from .init_strategies import InitStrategy, init_emem, init_kmeans, random_start
from .mbhac import Partition, cut_tree, mbhac_tree
from .transform import apply_transform

ALL_MODELS = tuple(ModelName)


def count_params(model: ModelName | str, k: int, p: int) -> int:
    """Free parameters: ``k - 1`` weights, ``k p`` means, plus covariance terms."""
    model = ModelName.parse(model)
    if k < 1 or p < 1:
        raise ValueError("k and p must be positive")
    rot = p * (p - 1) // 2
    cov = {
        ModelName.EII: 1,
        ModelName.VII: k,
        ModelName.EEI: p,
        ModelName.VVI: k * p,
        ModelName.EEE: p * (p + 1) // 2,
        ModelName.EEV: 1 + (p - 1) + k * rot,
        ModelName.VEV: k + (p - 1) + k * rot,
        ModelName.VVV: k * p * (p + 1) // 2,
    }[model]
    return (k - 1) + k * p + cov


def bic(loglik: float, nu: int, n: int) -> float:
    """``2 loglik - nu log n``; larger is better."""
    return 2.0 * loglik - nu * math.log(n)


def _labels(a) -> np.ndarray:
    return a.labels if isinstance(a, Partition) else np.asarray(a)


def ari(a, b) -> float:
    """Adjusted Rand index (Hubert and Arabie) between two labelings."""
    la, lb = _labels(a).ravel(), _labels(b).ravel()
    if la.size != lb.size:
        raise ValueError(f"label vectors differ in length ({la.size} vs {lb.size})")
    n = la.size
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia.ravel(), ib.ravel()), 1)

    def pairs(v):
        v = v.astype(np.float64)
        return float(np.sum(v * (v - 1.0) / 2.0))

    index = pairs(table)
    sa, sb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sa * sb / total if total > 0 else 0.0
    top = (sa + sb) / 2.0
    if top == expected:
        return 1.0 if index == top else 0.0
    return (index - expected) / (top - expected)


@dataclass
class SweepRow:
    model: ModelName
    k: int
    init: str
    loglik: float
    nu: int
    bic: float
    status: str
    fit: FitResult | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepResult:
    rows: list[SweepRow]
    strategy: InitStrategy
    n: int
    best: SweepRow | None = field(default=None)

    def __post_init__(self) -> None:
        good = [r for r in self.rows if r.ok and math.isfinite(r.bic)]
        self.best = max(good, key=lambda r: r.bic) if good else None

    def partition(self) -> Partition | None:
        if self.best is None or self.best.fit is None:
            return None
        return classify(self.best.fit.responsibilities)

    def table(self) -> list[dict]:
        return [
            {"model": r.model.value, "k": r.k, "loglik": r.loglik, "nu": r.nu,
             "bic": r.bic, "status": r.status}
            for r in self.rows
        ]


def _fit_one(x, init, model, k, tol, provenance) -> SweepRow:
    nu = count_params(model, k, x.p)
    if isinstance(init, str):
        return SweepRow(model, k, provenance[0], math.nan, nu, math.nan, init)
    fit = em(x, init, model, tol=tol, provenance=provenance)
    b = bic(fit.loglik, nu, x.n) if fit.ok else math.nan
    return SweepRow(model, k, provenance[0], fit.loglik, nu, b, fit.status, fit)


def _starts(x, models, ks, strategy, seed):
    """Yield (model, k, init-or-error-string, provenance) for every fit."""
    prov_kind = str(strategy)
    if strategy.kind == "mbhac":
        tree = mbhac_tree(apply_transform(x, strategy.transform))
        for k in ks:
            part = cut_tree(tree, k)
            for m in models:
                yield m, k, part, (prov_kind, strategy.transform.value, None)
    elif strategy.kind == "kmeans":
        for k in ks:
            s = np.random.SeedSequence([seed, k])
            part = init_kmeans(x, k, strategy.n_starts, s)
            for m in models:
                yield m, k, part, (prov_kind, None, seed)
    else:
        for k in ks:
            for mi, m in enumerate(models):
                s = np.random.SeedSequence([seed, k, ALL_MODELS.index(m)])
                try:
                    if strategy.kind == "emem":
                        g = init_emem(x, k, m, strategy.n_short, strategy.short_iters, s)
                    else:
                        g = random_start(x, k, np.random.Generator(np.random.PCG64(s)), m)
                    yield m, k, g, (prov_kind, None, seed)
                except FitError as exc:
                    yield m, k, f"{type(exc).__name__}: {exc}", (prov_kind, None, seed)


def sweep(
    x: DataMatrix,
    models: Iterable[ModelName | str] = ALL_MODELS,
    k_range: Sequence[int] = range(1, 13),
    strategy: InitStrategy | str = InitStrategy(),
    tol: float = 1e-5,
    seed: int = 0,
    n_jobs: int = 1,
) -> SweepResult:
    """Fit every (model, k) from the given strategy and pick the largest BIC.

    Hierarchical strategies build one merge tree and cut it at every k.
    Failed fits stay in the table with their status and no BIC.
    """
    if isinstance(strategy, str):
        strategy = InitStrategy.parse(strategy)
    models = [ModelName.parse(m) for m in models]
    ks = [int(k) for k in k_range if 1 <= int(k) <= x.n]
    if not models or not ks:
        raise ValueError("need at least one model and one valid k")
    jobs = [(x, init, m, k, tol, prov) for m, k, init, prov in _starts(x, models, ks, strategy, seed)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            rows = list(pool.map(_fit_star, jobs))
    else:
        rows = [_fit_one(*j) for j in jobs]
    order = {m: i for i, m in enumerate(models)}
    rows.sort(key=lambda r: (order[r.model], r.k))
    return SweepResult(rows, strategy, x.n)


def _fit_star(args) -> SweepRow:
    return _fit_one(*args)
