import os
from pathlib import Path

import numpy as np
import pytest

from mbclust import datasets

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def data_root() -> Path:
    return Path(os.environ.get("MBCLUST_DATA") or ROOT / "data")


@pytest.fixture(scope="session")
def crabs(data_root):
    try:
        return datasets.load("crabs", data_root)
    except (datasets.DatasetUnavailable, OSError) as exc:
        pytest.skip(f"crabs unavailable: {exc}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
