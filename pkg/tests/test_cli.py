import json

import pandas as pd
import pytest

from main import main, parse_values

TINY_TOML = """
name = "cli-tiny"
steps = 3
measure_every = 1
seeds = [1]

[task]
p = 5
split_fraction = 0.85

[model]
hidden_widths = [8]

[optimizer]
lr = 0.01
"""


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return str(path)


def _last_json(capsys) -> dict:
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return json.loads(lines[-1])


def test_train_writes_results(tiny_toml, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny_toml, "--out", str(out)]) == 0
    result = _last_json(capsys)
    assert result["status"] == "ok"
    assert set(result["final_val_acc"]) == {"1"}
    df = pd.read_csv(out / "metrics_seed1.csv")
    assert list(df["step"]) == [0, 1, 2, 3]


def test_seed_override(tiny_toml, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny_toml, "--seed", "9", "--out", str(out), "--no-deterministic"]) == 0
    assert (out / "metrics_seed9.csv").exists()
    assert not (out / "metrics_seed1.csv").exists()


def test_generate_dumps_dataset(tiny_toml, tmp_path, capsys):
    assert main(["generate", "--config", tiny_toml, "--out", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "dataset.csv")
    assert len(df) == 25
    assert (df["role"] == "train").sum() == 21


def test_sweep_directories(tiny_toml, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", tiny_toml, "--param", "reg.lambda_reg", "--values", "0,0.01", "--out", str(out)])
    assert code == 0
    result = _last_json(capsys)
    assert result["runs"] == ["reg.lambda_reg=0", "reg.lambda_reg=0.01"]
    # sweeps default to seed 42
    assert (out / "reg.lambda_reg=0.01" / "metrics_seed42.csv").exists()


def test_etf_check(tmp_path, capsys):
    assert main(["etf-check", "--out", str(tmp_path)]) == 0
    assert _last_json(capsys)["cells"] == 36
    cells = pd.read_csv(tmp_path / "etf_check.csv")
    assert cells["within_bound"].all()
    assert (tmp_path / "etf_decay.csv").exists()


def test_analyze_checkpoint(tiny_toml, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny_toml, "--out", str(out)]) == 0
    capsys.readouterr()
    code = main(["analyze", "--config", tiny_toml, "--checkpoint", str(out / "checkpoint_seed1.npz")])
    assert code == 0
    report = _last_json(capsys)["report"]
    assert report["kappa"] <= report["kappa_simplified"]


@pytest.mark.parametrize("argv, error", [
    (["train", "--preset", "no-such-preset"], "ConfigError"),
    (["analyze", "--preset", "grok-baseline"], "ValueError"),
    (["sweep", "--preset", "grok-baseline", "--param", "reg.nope", "--values", "1"], "ConfigError"),
    (["etf-check", "--preset", "grok-baseline"], "ConfigError"),
    (["train", "--workers", "0"], "ValueError"),
])
def test_failures_emit_one_json_error_line(argv, error, capsys):
    assert main(argv) == 1
    result = _last_json(capsys)
    assert result["status"] == "error"
    assert result["error"] == error
    assert result["message"]


def test_parse_values():
    assert parse_values("1e-4, 0.001,3,true,ncc") == [1e-4, 0.001, 3, True, "ncc"]
