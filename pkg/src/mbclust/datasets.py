"""Benchmark datasets: where they come from, how to fetch them, how to load them.

Datasets are not shipped with the package. Each one is stored as two files in
the data directory (``$MBCLUST_DATA`` or ``./data``):

* ``<name>.csv``   numeric features with a header row
* ``<name>.truth`` one class label per line, used only for scoring

``fetch`` writes them from an installed source and checks a SHA-256 digest.
Crabs comes from the ``rdatasets`` package (MASS::crabs). The flea beetle,
female vole and Italian wine tables have no pip-installable source; put them
in the data directory by hand in the layout above. Their expected shapes are
checked on load.
"""

from __future__ import annotations

import argparse
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import load_csv


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    shape: tuple[int, int]
    columns: tuple[str, ...] | None
    source: str
    standardize: bool = False
    parent: str | None = None
    sha256: str | None = None
    truth_sha256: str | None = None


CRABS_COLUMNS = ("FL", "RW", "CL", "CW", "BD")

REGISTRY: dict[str, DatasetInfo] = {
    "crabs": DatasetInfo(
        "crabs", (200, 5), CRABS_COLUMNS,
        "MASS::crabs via the rdatasets Python package; classes = species x sex",
        sha256="a085a55a7b8c3a58634713e96f7c9102e8ce758df658f2a75973c99d9e51e2d0",
        truth_sha256="488f5408f60b500d0c9395665f4b110e2d4d1cd81f61b8b559fd2bd7b087ad2f",
    ),
    "crabs_subset": DatasetInfo(
        "crabs_subset", (200, 4), ("FL", "RW", "CW", "BD"),
        "columns FL, RW, CW, BD of crabs (published variable-selection subset)",
        parent="crabs",
    ),
    "flea": DatasetInfo(
        "flea", (72, 6), ("tars1", "tars2", "head", "aede1", "aede2", "aede3"),
        "Lubischew (1962) flea beetles, three species; e.g. R package tourr::flea",
    ),
    "voles": DatasetInfo(
        "voles", (86, 7), None,
        "Flury (1997) female voles, M. californicus and M. ochrogaster, units of 0.1 mm",
    ),
    "wines": DatasetInfo(
        "wines", (178, 27), None,
        "Forina et al. (1986) Italian wines, 27 variables as in R package pgmm::wine",
        standardize=True,
    ),
}


class DatasetUnavailable(FileNotFoundError):
    pass


def data_dir(path: str | Path | None = None) -> Path:
    return Path(path or os.environ.get("MBCLUST_DATA") or "data")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(directory: Path, name: str, x: np.ndarray, columns, truth) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{name}.csv"
    truth_path = directory / f"{name}.truth"
    lines = [",".join(columns)]
    lines += [",".join(f"{v:.10g}" for v in row) for row in np.asarray(x, dtype=np.float64)]
    csv_path.write_text("\n".join(lines) + "\n")
    truth_path.write_text("\n".join(str(t) for t in truth) + "\n")
    return csv_path, truth_path


def _fetch_crabs(directory: Path) -> tuple[Path, Path]:
    try:
        import rdatasets
    except ImportError:
        raise DatasetUnavailable(
            "crabs needs the 'rdatasets' package: pip install 'artifact[datasets]'"
        ) from None
    df = rdatasets.data("MASS", "crabs")
    truth = (df["sp"].astype(str) + df["sex"].astype(str)).tolist()
    return write_dataset(directory, "crabs", df[list(CRABS_COLUMNS)].to_numpy(), CRABS_COLUMNS, truth)


FETCHERS: dict[str, Callable[[Path], tuple[Path, Path]]] = {"crabs": _fetch_crabs}


def fetch(name: str, directory: str | Path | None = None) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.truth`` and verify their digests."""
    info = REGISTRY[name]
    if info.parent:
        return fetch(info.parent, directory)
    if name not in FETCHERS:
        raise DatasetUnavailable(
            f"no automatic source for {name!r} ({info.source}); place {name}.csv and "
            f"{name}.truth in {data_dir(directory)} by hand"
        )
    csv_path, truth_path = FETCHERS[name](data_dir(directory))
    for path, want in ((csv_path, info.sha256), (truth_path, info.truth_sha256)):
        got = _digest(path)
        if want and got != want:
            raise ValueError(f"{path}: sha256 {got} does not match pinned {want}")
    return csv_path, truth_path


def load_truth(path: str | Path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return np.array([ln for ln in lines if ln])


def available(name: str, directory: str | Path | None = None) -> bool:
    info = REGISTRY[name]
    base = data_dir(directory)
    stem = info.parent or name
    return (base / f"{stem}.csv").exists() and (base / f"{stem}.truth").exists()


def load(name: str, directory: str | Path | None = None, auto_fetch: bool = True):
    """Return ``(DataMatrix, truth labels)`` for a registered dataset.

    Wines is returned standardized. Missing files are fetched when a source
    is known and ``auto_fetch`` is set.
    """
    info = REGISTRY[name]
    stem = info.parent or name
    base = data_dir(directory)
    if not available(name, directory):
        if auto_fetch and stem in FETCHERS:
            fetch(stem, directory)
        else:
            raise DatasetUnavailable(
                f"{base / (stem + '.csv')} not found; source: {info.source}"
            )
    x = load_csv(base / f"{stem}.csv")
    truth = load_truth(base / f"{stem}.truth")
    if info.parent:
        x = x.select(info.columns)
    if x.values.shape != info.shape:
        raise ValueError(f"{name}: expected shape {info.shape}, found {x.values.shape}")
    if truth.size != x.n:
        raise ValueError(f"{name}: {truth.size} truth labels for {x.n} rows")
    if info.standardize:
        x = x.standardized()
    return x, truth


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m mbclust.datasets", description=__doc__.split("\n")[0])
    ap.add_argument("names", nargs="*", default=sorted(FETCHERS))
    ap.add_argument("--dir", default=None)
    args = ap.parse_args(argv)
    status = 0
    for name in args.names:
        try:
            paths = fetch(name, args.dir)
            print(f"{name}: wrote {paths[0]} and {paths[1]}")
        except (DatasetUnavailable, ValueError) as exc:
            print(f"{name}: {exc}")
            status = 1
    return status


if __name__ == "__main__":
    raise SystemExit(main())
