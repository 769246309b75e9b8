import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mbclust.cli import RunConfig, main, orderings, parse_k_range, run_fit, run_ordering_study
from mbclust.init_strategies import InitStrategy
from mbclust.gmm import ModelName


@pytest.fixture
def small_csv(tmp_path):
    rng = np.random.default_rng(4)
    x = np.vstack([rng.normal(size=(25, 3)), rng.normal(size=(25, 3)) + [8, 0, 3]])
    path = tmp_path / "small.csv"
    np.savetxt(path, x, delimiter=",", header="a,b,c", comments="", fmt="%.6f")
    truth = tmp_path / "small.truth"
    truth.write_text("\n".join(["x"] * 25 + ["y"] * 25) + "\n")
    return path, truth


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_missing_input_exits_nonzero(tmp_path, capsys):
    code, _, err = run(["fit", "--input", str(tmp_path / "nope.csv")], capsys)
    assert code != 0
    assert "not found" in err


def test_bad_cell_exits_nonzero(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("a\n1\nNA\n")
    code, _, err = run(["fit", "--input", str(f)], capsys)
    assert code != 0 and "row 3" in err


def test_single_row_is_deterministic(small_csv, capsys):
    path, _ = small_csv
    argv = ["fit", "--input", str(path), "--k", "1", "--models", "eee", "--format", "jsonl"]
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv, capsys)
    assert first == second
    recs = [json.loads(line) for line in first.splitlines()]
    assert [r["record"] for r in recs] == ["fit", "best"]
    assert (recs[0]["model"], recs[0]["k"]) == ("EEE", 1)


def test_jsonl_byte_identical_and_lossless(small_csv, capsys):
    path, truth = small_csv
    argv = ["fit", "--input", str(path), "--truth", str(truth), "--k", "1..3",
            "--models", "EEE,VVV", "--init", "mbhac:svd", "--init", "emem",
            "--emem-short", "3", "--seed", "5", "--format", "jsonl"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
    best = [json.loads(line) for line in a.splitlines() if '"best"' in line]
    assert len(best) == 2
    direct = run_fit(RunConfig(path, truth, (InitStrategy.parse("mbhac:svd"),),
                               (ModelName.EEE, ModelName.VVV), (1, 2, 3)), out=io.StringIO())
    assert best[0]["bic"] == direct[0]["bic"]
    assert best[0]["ari"] == direct[0]["ari"] == 1.0
    assert len(best[0]["labels"]) == 50
    assert np.asarray(best[0]["covariances"]).shape == (best[0]["k"], 3, 3)


def test_table_layout(small_csv, capsys):
    path, truth = small_csv
    code, out, _ = run(["fit", "--input", str(path), "--truth", str(truth), "--k", "1..3",
                        "--init", "mbhac:svd", "--init", "mbhac:raw"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["Initialisation", "Model", "k", "BIC", "ARI", "Time"]
    assert lines[1].split()[:2] == ["SVD", lines[1].split()[1]]
    assert lines[2].split()[0] == "Default"
    assert lines[1].split()[4] == "1.0000"


def test_k_range_parsing():
    assert parse_k_range("1..4") == (1, 2, 3, 4)
    assert parse_k_range("3") == (3,)
    assert parse_k_range("2,5") == (2, 5)
    with pytest.raises(ValueError):
        parse_k_range("5..2")


def test_orderings_enumerate_or_sample():
    assert len(orderings(3, None)) == 6
    assert orderings(1, 10) == [(0,)]
    sample = orderings(6, 20, seed=1)
    assert len(sample) == 20 == len(set(sample))
    assert sample[0] == tuple(range(6))
    assert sample == orderings(6, 20, seed=1)


def test_ordering_study_svd_single_outcome(small_csv):
    path, truth = small_csv
    cfg = RunConfig(path, truth, (InitStrategy.parse("mbhac:svd"),), (ModelName.EEE, ModelName.VVV), (1, 2, 3))
    rep = run_ordering_study(cfg, out=None)
    assert rep["summary"]["orderings"] == 6
    assert rep["summary"]["outcomes"] == 1


def test_ordering_study_one_column(tmp_path, capsys):
    f = tmp_path / "one.csv"
    f.write_text("a\n" + "\n".join(str(v) for v in [0, 0.2, 0.1, 5, 5.3, 5.1, 9, 9.2]) + "\n")
    code, out, _ = run(["ordering-study", "--input", str(f), "--k", "1..2", "--models", "EII,VII", "--format", "jsonl"], capsys)
    assert code == 0
    summary = json.loads(out.splitlines()[-1])
    assert summary == {"record": "summary", "init": "mbhac:raw", "orderings": 1, "outcomes": 1,
                       "unique_bic": 1}


def test_console_script_entry_point(small_csv):
    path, _ = small_csv
    proc = subprocess.run([sys.executable, "-m", "mbclust.cli", "fit", "--input", str(path),
                           "--k", "2", "--models", "EII"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "EII" in proc.stdout
