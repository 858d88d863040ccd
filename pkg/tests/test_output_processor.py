import json
import math

import numpy as np
import pandas as pd
import pytest

from config.settings import METRICS_COLUMNS
from models.configs import MlpConfig, ModTaskConfig
from models.records import MetricsLog, MetricsRecord
from network.mlp import init_mlp
from processors.output_processor import (
    OutputProcessor,
    aggregate_logs,
    dump_dataset_csv,
    load_checkpoint,
    read_metrics_csv,
    save_checkpoint,
    write_metrics_csv,
)
from processors.task_processor import build_task
from utils.errors import OutputError

HEADER = ",".join(METRICS_COLUMNS)


def _record(step: int, **overrides) -> MetricsRecord:
    values = dict(
        step=step,
        epoch=step,
        train_loss=0.1 + 0.2,
        val_loss=1.0 / 3.0,
        train_acc=0.5,
        val_acc=0.25,
        gen_gap=1.0 / 3.0 - (0.1 + 0.2),
        ncc=np.pi * 1e-7,
        kappa=12345.678901234567,
        kappa_simplified=2e5,
        mean_angle_dev=np.e,
        representativeness=0.9999999999999999,
        effective_reg_coeff=1e-4,
    )
    values.update(overrides)
    return MetricsRecord(**values)


def test_header_matches_frozen_schema():
    assert HEADER == (
        "step,epoch,train_loss,val_loss,train_acc,val_acc,gen_gap,ncc,kappa,"
        "kappa_simplified,mean_angle_dev,representativeness,effective_reg_coeff"
    )


def test_empty_log_writes_header_only(tmp_path):
    path = write_metrics_csv(MetricsLog(seed=1), tmp_path / "m.csv")
    assert path.read_text() == HEADER + "\n"


def test_one_record_writes_two_lines(tmp_path):
    path = write_metrics_csv(MetricsLog(seed=1, records=[_record(0)]), tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("0,0,")


def test_written_file_parses_back_bitwise(tmp_path):
    original = MetricsLog(seed=3, records=[_record(0), _record(100, epoch=100, val_acc=1.0)])
    path = write_metrics_csv(original, tmp_path / "m.csv")
    parsed = read_metrics_csv(path, seed=3)
    assert parsed == original


def test_nan_metrics_survive_round_trip(tmp_path):
    original = MetricsLog(seed=3, records=[_record(0, ncc=float("nan"), mean_angle_dev=float("nan"))])
    parsed = read_metrics_csv(write_metrics_csv(original, tmp_path / "m.csv"))
    assert math.isnan(parsed.records[0].ncc)
    assert parsed.records[0].kappa == original.records[0].kappa


def test_write_failure_names_the_path(tmp_path, mocker):
    mocker.patch.object(pd.DataFrame, "to_csv", side_effect=OSError("disk full"))
    target = tmp_path / "m.csv"
    with pytest.raises(OutputError) as exc:
        write_metrics_csv(MetricsLog(seed=1), target)
    assert exc.value.path == target
    assert "disk full" in str(exc.value)


def test_read_rejects_foreign_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(OutputError):
        read_metrics_csv(path)


def test_aggregate_averages_over_seeds():
    a = MetricsLog(seed=1, records=[_record(0, train_acc=0.0), _record(10, epoch=10, train_acc=0.5)])
    b = MetricsLog(seed=2, records=[_record(0, train_acc=1.0), _record(10, epoch=10, train_acc=1.0)])
    mean = aggregate_logs([a, b])
    assert list(mean.columns) == list(METRICS_COLUMNS)
    assert list(mean["step"]) == [0, 10]
    assert list(mean["train_acc"]) == [0.5, 0.75]


def test_checkpoint_round_trip(tmp_path):
    params = init_mlp(MlpConfig(layer_widths=[6, 5, 4, 3], seed=2))
    path = save_checkpoint(params, tmp_path / "ckpt.npz")
    loaded = load_checkpoint(path)
    assert loaded.widths == [6, 5, 4, 3]
    for a, b in zip(params.arrays(), loaded.arrays()):
        assert np.array_equal(a, b)
    with np.load(path) as archive:
        assert {"widths", "W0", "b0", "W2", "b2"} <= set(archive.files)


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(OutputError):
        load_checkpoint(tmp_path / "missing.npz")


def test_dataset_dump(tmp_path):
    train, val = build_task(ModTaskConfig(p=5, seed=0))
    path = dump_dataset_csv(train, val, tmp_path / "dataset.csv")
    df = pd.read_csv(path)
    assert list(df.columns) == ["a", "b", "label", "role"]
    assert len(df) == 25
    assert set(df["role"]) == {"train", "validation"}
    assert ((df["a"] + df["b"]) % 5 == df["label"]).all()


def test_output_processor_layout(tiny_config):
    output = OutputProcessor(tiny_config)
    params = init_mlp(tiny_config.mlp_config(1))
    log_ = MetricsLog(seed=1, records=[_record(0)], val_ncc=[0.5])
    output.write_config()
    output.write_run(log_, params)
    output.write_aggregate([log_])
    output.write_summary([log_])

    names = {p.name for p in output.output_dir.iterdir()}
    assert names == {
        "config.json", "metrics_seed1.csv", "val_ncc_seed1.csv", "checkpoint_seed1.npz",
        "metrics_mean.csv", "summary.json",
    }
    config = json.loads((output.output_dir / "config.json").read_text())
    assert config["task"]["p"] == 5
    summary = json.loads((output.output_dir / "summary.json").read_text())
    assert summary["1"]["step"] == 0
