import json
import os

import pytest
from click.testing import CliRunner

from gaitdetect.cli import (EXIT_DATA, EXIT_USER, main)

N_TRIALS = 10


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0


def test_stage_chain(runner, workdir):
    """synth -> preprocess -> features -> train -> evaluate -> report."""
    out = str(workdir)

    result = runner.invoke(main, ["--out", out, "--seed", "3", "synth",
                                  "--session-id", "demo",
                                  "--n-trials", str(N_TRIALS)])
    assert result.exit_code == 0, result.output
    for suffix in (".header.csv", ".data.csv", ".events.csv", ".ground_truth.json"):
        assert os.path.exists(os.path.join(out, "demo" + suffix))
    with open(os.path.join(out, "demo.ground_truth.json")) as fh:
        gt = json.load(fh)
    assert gt["config"]["seed"] == 3
    assert len(gt["trials"]) == N_TRIALS

    result = runner.invoke(main, ["--out", out, "preprocess",
                                  "--session", os.path.join(out, "demo")])
    assert result.exit_code == 0, result.output
    epochs_path = os.path.join(out, "demo.epochs.npz")
    assert os.path.exists(epochs_path)

    result = runner.invoke(main, ["--out", out, "features",
                                  "--epochs", epochs_path])
    assert result.exit_code == 0, result.output
    amp_csv = os.path.join(out, "demo.amplitude.csv")
    phase_csv = os.path.join(out, "demo.phase.csv")
    assert os.path.exists(amp_csv) and os.path.exists(phase_csv)

    result = runner.invoke(main, ["--out", out, "train",
                                  "--amplitude", amp_csv, "--phase", phase_csv,
                                  "--kind", "amplitude"])
    assert result.exit_code == 0, result.output
    model_path = os.path.join(out, "model.amplitude.json")
    assert os.path.exists(model_path)

    result = runner.invoke(main, ["--out", out, "evaluate",
                                  "--model", model_path,
                                  "--amplitude", amp_csv, "--phase", phase_csv])
    assert result.exit_code == 0, result.output
    report_path = os.path.join(out, "report.json")
    assert os.path.exists(report_path)
    assert "AUC" in result.output

    tables = os.path.join(out, "tables")
    result = runner.invoke(main, ["--out", tables, "report", report_path])
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(tables, "trial_accuracy.csv"))


def test_pipeline_requires_config(runner):
    result = runner.invoke(main, ["pipeline"])
    assert result.exit_code == EXIT_USER
    assert "--config" in result.output


def test_pipeline_missing_session_file(runner, workdir):
    cfg_path = workdir / "broken.ini"
    cfg_path.write_text("[subject:s01]\nsessions = missing_session\n")
    result = runner.invoke(main, ["--config", str(cfg_path), "pipeline"])
    assert result.exit_code == EXIT_USER
    assert "missing_session" in result.output


def test_report_requires_input(runner):
    result = runner.invoke(main, ["report"])
    assert result.exit_code == EXIT_USER


def test_synth_invalid_config_is_data_error(runner, workdir):
    result = runner.invoke(main, ["--out", str(workdir), "synth",
                                  "--phase-lock-lead-s", "0"])
    assert result.exit_code == EXIT_DATA


def test_evaluate_feature_mismatch_is_data_error(runner, workdir):
    # features at a different decimation do not match the trained model
    out = str(workdir)
    epochs_path = os.path.join(out, "demo.epochs.npz")
    coarse = os.path.join(out, "coarse")
    result = runner.invoke(main, ["--out", coarse, "features",
                                  "--epochs", epochs_path, "--decimation", "32"])
    assert result.exit_code == 0, result.output
    result = runner.invoke(main, [
        "--out", coarse, "evaluate",
        "--model", os.path.join(out, "model.amplitude.json"),
        "--amplitude", os.path.join(coarse, "demo.amplitude.csv"),
        "--phase", os.path.join(coarse, "demo.phase.csv")])
    assert result.exit_code == EXIT_DATA
    assert "not match" in result.output
