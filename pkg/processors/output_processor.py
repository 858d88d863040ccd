"""
Write and read run outputs: metrics CSVs, seed aggregates, checkpoints and dataset dumps.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config.settings import CSV_FLOAT_FORMAT, METRICS_COLUMNS, OUTPUT_DIR
from models.configs import ExperimentConfig
from models.records import MetricsLog, MetricsRecord
from network.mlp import MlpParams
from processors.task_processor import Dataset
from utils.errors import OutputError
from utils.logger import log

# Checkpoint layout (numpy .npz archive):
#   widths : int64 array [input, hidden..., classes]
#   W<i>   : float64 (widths[i+1], widths[i]) weight of layer i
#   b<i>   : float64 (widths[i+1],) bias of layer i
CHECKPOINT_FORMAT_VERSION = 1


def _to_csv(df: pd.DataFrame, path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    except OSError as e:
        raise OutputError(path, e) from e


def write_metrics_csv(metrics: MetricsLog, path) -> Path:
    """One row per measured step; floats at 17 significant digits."""
    path = Path(path)
    df = pd.DataFrame([r.as_row() for r in metrics.records], columns=list(METRICS_COLUMNS))
    _to_csv(df, path)
    log.debug(f"Wrote {len(metrics)} metrics rows to: {path}")
    return path


def read_metrics_csv(path, seed: Optional[int] = None) -> MetricsLog:
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    except (OSError, pd.errors.ParserError) as e:
        raise OutputError(path, e) from e
    if tuple(df.columns) != METRICS_COLUMNS:
        raise OutputError(path, ValueError(f"unexpected header {list(df.columns)}"))
    int_cols = ("step", "epoch")
    records = [
        MetricsRecord(**{col: int(row[col]) if col in int_cols else float(row[col]) for col in METRICS_COLUMNS})
        for row in df.to_dict(orient="records")
    ]
    return MetricsLog(seed=seed, records=records)


def aggregate_logs(logs: List[MetricsLog]) -> pd.DataFrame:
    """Mean over seeds per step."""
    frames = [pd.DataFrame([r.as_row() for r in lg.records], columns=list(METRICS_COLUMNS)) for lg in logs]
    stacked = pd.concat(frames, ignore_index=True)
    if stacked.empty:
        return stacked
    mean = stacked.groupby("step", sort=True).mean(numeric_only=True).reset_index()
    mean["epoch"] = mean["epoch"].round().astype(np.int64)
    return mean[list(METRICS_COLUMNS)]


def save_checkpoint(params: MlpParams, path) -> Path:
    path = Path(path)
    arrays = {"widths": np.asarray(params.widths, dtype=np.int64),
              "format_version": np.asarray(CHECKPOINT_FORMAT_VERSION)}
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise OutputError(path, e) from e
    log.debug(f"Checkpoint saved to: {path}")
    return path


def load_checkpoint(path) -> MlpParams:
    path = Path(path)
    try:
        with np.load(path) as archive:
            widths = [int(w) for w in archive["widths"]]
            weights = [archive[f"W{i}"].astype(np.float64) for i in range(len(widths) - 1)]
            biases = [archive[f"b{i}"].astype(np.float64) for i in range(len(widths) - 1)]
    except (OSError, KeyError, ValueError) as e:
        raise OutputError(path, e) from e
    for i, W in enumerate(weights):
        if W.shape != (widths[i + 1], widths[i]):
            raise OutputError(path, ValueError(f"W{i} has shape {W.shape}, header says {(widths[i + 1], widths[i])}"))
    return MlpParams(weights, biases)


def dump_dataset_csv(train: Dataset, val: Dataset, path) -> Path:
    """Columns a, b, label, role."""
    path = Path(path)
    frames = [
        pd.DataFrame({"a": d.inputs[:, 0], "b": d.inputs[:, 1], "label": d.labels, "role": d.role})
        for d in (train, val)
    ]
    df = pd.concat(frames, ignore_index=True).sort_values(["a", "b"], kind="stable")
    _to_csv(df, path)
    log.info(f"Dataset ({len(df)} rows) saved to: {path}")
    return path


class OutputProcessor:
    """Lays out the output directory of one experiment."""

    def __init__(self, cfg: ExperimentConfig, output_dir: Optional[Path] = None):
        self.cfg = cfg
        self.output_dir = Path(output_dir or cfg.output_dir or OUTPUT_DIR / cfg.name)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(self.output_dir, e) from e
        self.written: List[Path] = []

    def metrics_path(self, seed: int) -> Path:
        return self.output_dir / f"metrics_seed{seed}.csv"

    def checkpoint_path(self, seed: int) -> Path:
        return self.output_dir / f"checkpoint_seed{seed}.npz"

    def write_config(self) -> Path:
        path = self.output_dir / "config.json"
        try:
            path.write_text(self.cfg.model_dump_json(indent=2), encoding="utf-8")
        except OSError as e:
            raise OutputError(path, e) from e
        self.written.append(path)
        return path

    def write_run(self, metrics: MetricsLog, params: Optional[MlpParams] = None):
        self.written.append(write_metrics_csv(metrics, self.metrics_path(metrics.seed)))
        if metrics.val_ncc:
            path = self.output_dir / f"val_ncc_seed{metrics.seed}.csv"
            df = pd.DataFrame({"step": [r.step for r in metrics.records], "val_ncc": metrics.val_ncc})
            _to_csv(df, path)
            self.written.append(path)
        if params is not None and self.cfg.save_checkpoint:
            self.written.append(save_checkpoint(params, self.checkpoint_path(metrics.seed)))

    def write_aggregate(self, logs: List[MetricsLog]) -> Path:
        path = self.output_dir / "metrics_mean.csv"
        _to_csv(aggregate_logs(logs), path)
        self.written.append(path)
        return path

    def write_summary(self, logs: List[MetricsLog]) -> Path:
        """Terminal values per seed, for quick inspection."""
        summary: Dict[str, Dict] = {}
        for lg in logs:
            if lg.records:
                summary[str(lg.seed)] = lg.records[-1].as_row()
        path = self.output_dir / "summary.json"
        try:
            path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
        except OSError as e:
            raise OutputError(path, e) from e
        self.written.append(path)
        log.info(f"Results saved to: {self.output_dir}")
        return path
