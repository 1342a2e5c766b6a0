"""Trainer command-line entry points."""

import json

import pytest

from nbvtrainer.cli import main


@pytest.fixture(scope="module")
def cli_run(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    rc = main(["train", "--dataset", str(tiny_dataset), "--variant", "2D",
               "--epochs", "2", "--seed", "9", "--out", str(out)])
    assert rc == 0
    return out


def test_train_command_writes_artifacts(cli_run, capsys):
    assert (cli_run / "weights.exhw").exists()
    assert (cli_run / "training_log.csv").exists()


def test_evaluate_command(cli_run, tiny_dataset, tmp_path, capsys):
    rc = main(["evaluate", "--weights", str(cli_run / "weights.exhw"),
               "--dataset", str(tiny_dataset), "--split", "val",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy:" in out and "f1:" in out
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "confusion.csv").exists()


def test_export_fixture_command(cli_run, tmp_path, capsys):
    rc = main(["export-fixture", "--weights",
               str(cli_run / "weights.exhw"), "--out", str(tmp_path),
               "--seed", "2"])
    assert rc == 0
    doc = json.loads((tmp_path / "fixture.json").read_text())
    assert doc["variant"] == "2D"


def test_errors_exit_nonzero(tmp_path, capsys):
    rc = main(["evaluate", "--weights", str(tmp_path / "missing.exhw"),
               "--dataset", str(tmp_path), "--split", "val"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
