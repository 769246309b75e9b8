"""Command-line front end.

``mbclust fit``             BIC sweep for one or more initialisation strategies
``mbclust ordering-study``  repeat the sweep over permutations of the input columns
``mbclust fetch-data``      download the benchmark datasets that have a known source

Two output formats: an aligned text table (``--format table``) and one JSON
object per line (``--format jsonl``). JSON lines carry every fitted (model, k)
row, the selected model with its parameters, and never any timing, so equal
inputs and seeds give byte-identical output.

JSON records (field ``record``):

``fit``       init, model, k, loglik, nu, bic, status
``best``      init, model, k, loglik, nu, bic, ari, n_iter, converged,
              weights, means, covariances, labels
``ordering``  order, model, k, bic, ari
``outcome``   model, k, count, bic, ari
``summary``   orderings, outcomes, unique_bic
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import re
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from . import datasets
from .data import DataError, DataMatrix, load_csv
from .gmm import ModelName
from .init_strategies import InitStrategy
from .selection import ALL_MODELS, SweepResult, ari, sweep


@dataclass(frozen=True)
class RunConfig:
    input: Path
    truth: Path | None = None
    inits: tuple[InitStrategy, ...] = (InitStrategy("mbhac", "svd"),)
    models: tuple[ModelName, ...] = ALL_MODELS
    k_range: tuple[int, ...] = tuple(range(1, 13))
    tol: float = 1e-5
    seed: int = 0
    standardize: bool = False
    columns: tuple[str, ...] | None = None
    output_format: str = "table"
    n_jobs: int = 1

    def validate(self) -> None:
        if not self.input.exists():
            raise FileNotFoundError(f"input file not found: {self.input}")
        if self.truth is not None and not self.truth.exists():
            raise FileNotFoundError(f"truth file not found: {self.truth}")
        if not self.models or not self.k_range or min(self.k_range) < 1:
            raise ValueError("need at least one model and k >= 1")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.output_format not in ("table", "jsonl"):
            raise ValueError(f"unknown format {self.output_format!r}")


def parse_k_range(text: str) -> tuple[int, ...]:
    """``"4"``, ``"1..12"`` or ``"1,3,5"``."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.|-|:)\s*(\d+)\s*", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if a > b:
            raise ValueError(f"empty k range {text!r}")
        return tuple(range(a, b + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def parse_models(text: str) -> tuple[ModelName, ...]:
    if text.lower() == "all":
        return ALL_MODELS
    return tuple(ModelName.parse(t.strip()) for t in text.split(",") if t.strip())


def load_input(config: RunConfig) -> tuple[DataMatrix, np.ndarray | None]:
    x = load_csv(config.input)
    if config.columns:
        x = x.select(config.columns)
    if config.standardize:
        x = x.standardized()
    truth = datasets.load_truth(config.truth) if config.truth else None
    if truth is not None and truth.size != x.n:
        raise DataError(f"{truth.size} truth labels for {x.n} observations")
    return x, truth


def _row_record(strategy: InitStrategy, r) -> dict:
    return {
        "record": "fit", "init": str(strategy), "model": r.model.value, "k": r.k,
        "loglik": _num(r.loglik), "nu": r.nu, "bic": _num(r.bic), "status": r.status,
    }


def _num(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def _best_record(res: SweepResult, ari_value: float | None) -> dict:
    b = res.best
    rec = {"record": "best", "init": str(res.strategy)}
    if b is None:
        rec["status"] = "no successful fit"
        return rec
    g = b.fit.mixture
    rec.update(
        model=b.model.value, k=b.k, loglik=b.loglik, nu=b.nu, bic=b.bic,
        ari=_num(ari_value) if ari_value is not None else None,
        n_iter=b.fit.n_iter, converged=b.fit.converged,
        weights=g.weights.tolist(), means=g.means.tolist(),
        covariances=g.covariances.tolist(),
        labels=res.partition().labels.tolist(),
    )
    return rec


def run_fit(config: RunConfig, out: TextIO | None = None) -> list[dict]:
    """Sweep every requested strategy; write the report and return the best records."""
    out = out or sys.stdout
    config.validate()
    x, truth = load_input(config)
    bests = []
    lines = []
    for strategy in config.inits:
        t0 = time.perf_counter()
        res = sweep(x, config.models, config.k_range, strategy, config.tol, config.seed, config.n_jobs)
        elapsed = time.perf_counter() - t0
        a = ari(res.partition(), truth) if truth is not None and res.best else None
        best = _best_record(res, a)
        bests.append(best)
        if config.output_format == "jsonl":
            for r in res.rows:
                out.write(json.dumps(_row_record(strategy, r)) + "\n")
            out.write(json.dumps(best) + "\n")
        else:
            lines.append((strategy.label, best, elapsed))
    if config.output_format == "table":
        _write_table(out, [(lab, b.get("model", "-"), b.get("k", "-"), b.get("bic"), b.get("ari"), f"{t:.2f} s")
                           for lab, b, t in lines])
    return bests


def _fmt(v, digits=2) -> str:
    if v is None:
        return "-"
    return f"{v:.{digits}f}"


def _write_table(out: TextIO, rows) -> None:
    header = ("Initialisation", "Model", "k", "BIC", "ARI", "Time")
    body = [(str(a), str(m), str(k), _fmt(b), _fmt(r, 4), str(t)) for a, m, k, b, r, t in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(header)]
    out.write("  ".join(h.ljust(w) if i < 3 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths))) + "\n")
    for row in body:
        out.write("  ".join(c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))) + "\n")


def orderings(p: int, max_orderings: int | None, seed: int = 0) -> list[tuple[int, ...]]:
    """All column orders when ``p!`` fits in ``max_orderings``, otherwise a seeded sample.

    The identity order is always first.
    """
    total = math.factorial(p)
    if max_orderings is None or total <= max_orderings:
        return list(itertools.permutations(range(p)))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    chosen = [tuple(range(p))]
    seen = set(chosen)
    while len(chosen) < max_orderings:
        perm = tuple(int(i) for i in rng.permutation(p))
        if perm not in seen:
            seen.add(perm)
            chosen.append(perm)
    return chosen


def _one_ordering(args):
    x, truth, order, config, strategy = args
    xp = x.select(list(order))
    res = sweep(xp, config.models, config.k_range, strategy, config.tol, config.seed)
    b = res.best
    if b is None:
        return order, None, None, math.nan, None
    a = ari(res.partition(), truth) if truth is not None else None
    return order, b.model.value, b.k, b.bic, a


def run_ordering_study(
    config: RunConfig, max_orderings: int | None = None, out: TextIO | None | bool = True
) -> dict:
    """Refit under column permutations and tabulate the selected (model, k).

    ``out=None`` suppresses the report; the default writes to stdout.
    """
    if out is True:
        out = sys.stdout
    config.validate()
    x, truth = load_input(config)
    strategy = config.inits[0]
    orders = orderings(x.p, max_orderings, config.seed)
    jobs = [(x, truth, o, config, strategy) for o in orders]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(config.n_jobs) as pool:
            results = list(pool.map(_one_ordering, jobs))
    else:
        results = [_one_ordering(j) for j in jobs]

    counts = Counter((m, k) for _, m, k, _, _ in results)
    outcomes = []
    for (m, k), c in sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0]))):
        group = [r for r in results if (r[1], r[2]) == (m, k)]
        bic_mode = Counter(round(r[3], 2) for r in group).most_common(1)[0][0]
        rep = next(r for r in group if round(r[3], 2) == bic_mode)
        outcomes.append({"record": "outcome", "model": m, "k": k, "count": c, "bic": rep[3], "ari": rep[4]})
    unique_bic = len({round(r[3], 2) for r in results if math.isfinite(r[3])})
    summary = {"record": "summary", "init": str(strategy), "orderings": len(results),
               "outcomes": len(outcomes), "unique_bic": unique_bic}
    if out is not None:
        if config.output_format == "jsonl":
            for order, m, k, b, a in results:
                out.write(json.dumps({"record": "ordering", "order": [x.column_names[i] for i in order],
                                      "model": m, "k": k, "bic": _num(b), "ari": _num(a) if a is not None else None}) + "\n")
            for o in outcomes:
                out.write(json.dumps(o) + "\n")
            out.write(json.dumps(summary) + "\n")
        else:
            _write_table(out, [(f"{strategy.label} ({o['count']})", o["model"], o["k"], o["bic"], o["ari"], "")
                               for o in outcomes])
            out.write(f"{len(results)} orderings, {len(outcomes)} distinct (model, k), "
                      f"{unique_bic} unique BIC values (2 decimals)\n")
    return {"orderings": results, "outcomes": outcomes, "summary": summary}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", help="CSV file with a header row")
    p.add_argument("--dataset", choices=sorted(datasets.REGISTRY),
                   help="registered dataset (sets --input, --truth, columns and --standardize)")
    p.add_argument("--data-dir", default=None, help="where registered datasets live (default $MBCLUST_DATA or ./data)")
    p.add_argument("--truth", help="file with one true class label per line, used only for ARI")
    p.add_argument("--init", action="append", default=None,
                   help="mbhac:{raw,std,sph,pcs,pcr,svd} | kmeans | emem (repeatable)")
    p.add_argument("--models", default="all", help="comma-separated model names or 'all'")
    p.add_argument("--k", default="1..12", help="k range, e.g. 1..12 or 2,3,4")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--columns", help="comma-separated subset of columns, in order")
    p.add_argument("--format", choices=("table", "jsonl"), default="table")
    p.add_argument("--kmeans-starts", type=int, default=50)
    p.add_argument("--emem-short", type=int, default=50)
    p.add_argument("--emem-iters", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mbclust", description="Gaussian mixture clustering with hierarchical EM starts")
    sub = ap.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", help="BIC sweep over models and k")
    _add_common(fit)
    study = sub.add_parser("ordering-study", help="sweep under permutations of the columns")
    _add_common(study)
    study.add_argument("--max-orderings", type=int, default=None,
                       help="sample this many column orders when p! is larger")
    fetch = sub.add_parser("fetch-data", help="fetch registered datasets that have a source")
    fetch.add_argument("names", nargs="*", default=sorted(datasets.FETCHERS))
    fetch.add_argument("--data-dir", default=None)
    return ap


def config_from_args(args) -> RunConfig:
    inp, truth, columns, standardize = args.input, args.truth, None, args.standardize
    if args.dataset:
        info = datasets.REGISTRY[args.dataset]
        stem = info.parent or info.name
        base = datasets.data_dir(args.data_dir)
        if not datasets.available(args.dataset, args.data_dir) and stem in datasets.FETCHERS:
            datasets.fetch(stem, args.data_dir)
        inp = inp or base / f"{stem}.csv"
        truth = truth or base / f"{stem}.truth"
        if info.parent:
            columns = info.columns
        standardize = standardize or info.standardize
    if args.columns:
        columns = tuple(c.strip() for c in args.columns.split(","))
    if inp is None:
        raise ValueError("one of --input or --dataset is required")
    kw = dict(n_starts=args.kmeans_starts, n_short=args.emem_short, short_iters=args.emem_iters)
    default_init = ["mbhac:raw"] if args.command == "ordering-study" else ["mbhac:svd"]
    inits = tuple(InitStrategy.parse(s, **kw) for s in (args.init or default_init))
    return RunConfig(
        input=Path(inp), truth=Path(truth) if truth else None, inits=inits,
        models=parse_models(args.models), k_range=parse_k_range(args.k), tol=args.tol,
        seed=args.seed, standardize=standardize, columns=columns,
        output_format=args.format, n_jobs=args.jobs,
    )


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "fetch-data":
            return datasets.main(list(args.names) + (["--dir", args.data_dir] if args.data_dir else []))
        config = config_from_args(args)
        if args.command == "fit":
            run_fit(config)
        else:
            run_ordering_study(config, args.max_orderings)
    except (OSError, ValueError) as exc:
        print(f"mbclust: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
