import io
import json
from pathlib import Path

import pandas as pd
import pytest

from cli import main
from services.dataset import load_dataset

APP_DIR = Path(__file__).resolve().parent
STEEL = str(APP_DIR / "specs" / "case1_source.conf")


def test_simulate_writes_dataset(tmp_path, capsys):
    out = tmp_path / "source.csv"
    code = main(["simulate", "--spec", STEEL, "--counts", "0:3,2:2", "--seed", "1",
                 "--out", str(out)])
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n"] == 5
    assert printed["domain_tag"] == "case1_source"
    ds = load_dataset(out)
    assert ds.labels.tolist() == [0, 0, 0, 2, 2]
    assert out.with_suffix(".json").is_file()


def test_errors_are_printed_as_json(tmp_path, capsys):
    code = main(["simulate", "--spec", str(tmp_path / "missing.conf"), "--counts", "0:1", "--out",
                 str(tmp_path / "x.csv")])
    assert code == 1
    printed = json.loads(capsys.readouterr().out)
    assert printed["type"] == "ConfigError"
    assert not (tmp_path / "x.csv").exists()


def test_bad_counts_exit_code(tmp_path, capsys):
    code = main(["simulate", "--spec", STEEL, "--counts", "zero", "--out",
                 str(tmp_path / "x.csv")])
    assert code == 1
    assert json.loads(capsys.readouterr().out)["type"] == "ConfigError"


def test_bench_toy(tmp_path, capsys):
    code = main(["bench", "toy", "--out-dir", str(tmp_path), "--repeats", "2", "--seed", "3"])
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert [s["method"] for s in printed["summary"]] == ["n_stand", "a_stand", "nca"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["seed"] == 3
    assert len(report["rows"]) == 6


def test_bench_rejects_mismatched_config(tmp_path, capsys):
    code = main(["bench", "toy", "--config", str(APP_DIR / "cases" / "case1.conf"), "--out-dir", str(tmp_path)])
    assert code == 1
    assert json.loads(capsys.readouterr().out)["type"] == "ConfigError"


def test_unknown_case_is_rejected_by_parser():
    with pytest.raises(SystemExit):
        main(["bench", "case9"])


def test_sensitivity_to_stdout(tmp_path, capsys):
    data = tmp_path / "rows.csv"
    pd.DataFrame({"f0": [float(i) for i in range(40)], "f1": [1.0, -1.0] * 20}).to_csv(data, index=False)
    code = main(["sensitivity", "--in", str(data), "--sizes", "10:40:10"])
    assert code == 0
    table = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(table) == 8
    assert table[(table["size"] == 40) & (table["feature"] == "f1")]["mean"].item() == 0.0


def test_plotdata_from_report(tmp_path, capsys):
    assert main(["bench", "toy", "--out-dir", str(tmp_path), "--repeats", "1"]) == 0
    capsys.readouterr()
    assert main(["plotdata", "--report", str(tmp_path / "report.json"), "--out-dir", str(tmp_path / "p")]) == 0
    written = json.loads(capsys.readouterr().out)
    assert "bars" in written
    assert (tmp_path / "p" / "bars.csv").is_file()
