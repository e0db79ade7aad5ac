import json

import pytest

from gdfc import cli
from gdfc.gradcheck import GradcheckResult


@pytest.fixture
def env(tmp_path, data_dir, monkeypatch):
    monkeypatch.setenv("GDFC_DATA_DIR", data_dir)
    monkeypatch.setenv("GDFC_RESULTS_DIR", str(tmp_path / "results"))
    return tmp_path / "results"


def test_gradcheck_passes(capsys):
    assert cli.main(["bench", "gradcheck"]) == 0
    assert "60/60 cases passed" in capsys.readouterr().out


def test_gradcheck_exit_code_on_failure(monkeypatch, capsys):
    bad = [GradcheckResult([2, 3, 2], 0.5, 0.0, 0.3, 17, False)]
    monkeypatch.setattr(cli, "run_gradcheck", lambda **kw: bad)
    assert cli.main(["bench", "gradcheck"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_run_report_round_trip(env, capsys):
    assert cli.main(["bench", "run", "wine", "knn", "--k", "3"]) == 0
    assert cli.main(["bench", "run", "wine", "gdfc", "--epochs", "5", "--hidden-sizes", "8", "--eta", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "wine knn" in out and "GA=" in out
    rows = [json.loads(line) for line in (env / "results.jsonl").read_text().splitlines()]
    assert rows[1]["config"]["hidden_sizes"] == [8] and rows[1]["config"]["eta"] == 1.0
    assert rows[1]["config"]["partition_dim"] == 6
    assert cli.main(["bench", "report"]) == 0
    text = capsys.readouterr().out
    assert "MEAN" in text and "GDFC[cited]" in text
    assert (env / "report_ga.csv").exists()


def test_run_bench_twice_gives_identical_report(env, tmp_path, capsys):
    for _ in range(2):
        cli.main(["bench", "run", "wine", "gdfc", "--epochs", "5", "--seed", "1", "--force"])
    rows = [json.loads(line) for line in (env / "results.jsonl").read_text().splitlines()]
    for r in rows:
        r.pop("wall_time")
    assert rows[0] == rows[1]


def test_sweep_verb(env, capsys):
    rc = cli.main(["bench", "sweep", "wine", "knn", "--grid", "k=1,3,5", "--budget", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("inner GA") == 2


def test_fnn_flags_map_to_hidden(env, capsys):
    assert cli.main(["bench", "run", "wine", "fnn", "--epochs", "3", "--hidden-sizes", "7"]) == 0
    row = json.loads((env / "results.jsonl").read_text().splitlines()[0])
    assert row["config"]["hidden"] == 7


def test_unknown_dataset_lists_keys(env, capsys):
    assert cli.main(["bench", "run", "nope", "gdfc"]) == 2
    assert "wine" in capsys.readouterr().err


def test_report_on_empty_store(env, capsys):
    assert cli.main(["bench", "report"]) == 1


def test_train_and_prepare(tmp_path, data_dir, capsys):
    out = tmp_path / "model.json"
    assert cli.main(["bench", "train", "wine", "gdfc", "--epochs", "5", "--data-dir", data_dir, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["schema"] == "gdfc.model/1"
    assert cli.main(["bench", "prepare-data", "--data-dir", str(tmp_path / "d")]) == 0
    assert "balance" in capsys.readouterr().out
