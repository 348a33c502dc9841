import pandas as pd
import pytest

from dhsflow.cli import main
from pipeline import run_pipeline


def cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    return root, run_pipeline(root)


def test_pipeline_writes_expected_files(outputs):
    root, csvs = outputs
    names = {p.relative_to(root).as_posix() for p in csvs}
    for expected in ("data.csv", "weather.csv", "surro/metrics.csv", "sweep.csv",
                     "ddpg/learning_curve.csv", "report.csv", "hist.csv", "rolling.csv",
                     "balance.csv", "summary.csv", "traces/trace_manual.csv",
                     "traces/trace_ddpg.csv", "traces/trace_sl.csv"):
        assert expected in names


def test_report_contents(outputs):
    root, _ = outputs
    summary = pd.read_csv(root / "summary.csv")
    assert summary.controller.tolist() == ["manual", "ddpg", "sl"]
    manual = summary.iloc[0]
    assert manual.water_ratio_primary == 1.0 and manual.water_ratio_secondary == 1.0
    hist = pd.read_csv(root / "hist.csv")
    assert len(hist) == 3 * 2 * 8
    assert len(pd.read_csv(root / "rolling.csv")) == 2


def test_sweep_uses_flop_counts(outputs):
    root, _ = outputs
    sweep = pd.read_csv(root / "sweep.csv")
    assert "train_flops" in sweep.columns and len(sweep) == 2


def test_data_csv_reloads(outputs):
    from dhsflow.data import read_dataset
    root, _ = outputs
    df = read_dataset(root / "data.csv")
    assert df.timestamp.dt.normalize().nunique() == 16


def test_usage_errors_exit_2(tmp_path, capsys):
    assert cli() == 2
    assert cli("gen-data") == 2
    assert cli("train", "--algo", "ppo", "--data", "x", "--out", "y") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("plant.colour = blue\n")
    assert cli("gen-data", "--config", bad, "--out", tmp_path / "d.csv") == 2
    assert "config error" in capsys.readouterr().err


def test_surrogate_backend_needs_directory(tmp_path, outputs):
    root, _ = outputs
    assert cli("train", "--data", root / "data.csv", "--backend", "surrogate",
                 "--out", tmp_path / "x") == 2


def test_stage_failure_exits_1(tmp_path):
    assert cli("eval", "--data", tmp_path / "missing.csv", "--report",
                 tmp_path / "r.csv") == 1
    tiny = tmp_path / "tiny.csv"
    assert cli("gen-data", "--days", 3, "--out", tiny) == 0
    assert cli("rolling", "--data", tiny, "--out", tmp_path / "r.csv") == 1
