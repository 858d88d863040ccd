"""
Recompute a geometry snapshot from a saved checkpoint and the run's config.
"""
from pathlib import Path
from typing import Optional

from models.configs import ExperimentConfig
from models.records import GeometryReport
from network.mlp import forward
from processors.output_processor import load_checkpoint
from processors.task_processor import build_task
from runners.experiment_runner import blas_limits, measure_geometry
from utils.errors import ConfigError
from utils.logger import log


def analyze_checkpoint(cfg: ExperimentConfig, checkpoint: Path, seed: Optional[int] = None) -> GeometryReport:
    """
    Rebuild the seed's dataset split, load the parameters and measure them.
    ``seed`` defaults to the first seed of the config.
    """
    seed = cfg.seeds[0] if seed is None else seed
    params = load_checkpoint(checkpoint)
    expected = cfg.mlp_config(seed).layer_widths
    if params.widths != expected:
        raise ConfigError(f"checkpoint widths {params.widths} do not match config widths {expected}")

    log.info(f"Analyzing {checkpoint} (seed={seed})")
    with blas_limits(cfg.deterministic):
        train, val = build_task(cfg.task_config(seed))
        report, _ = measure_geometry(
            params, forward(params, train.encoded), forward(params, val.encoded), train, val, cfg, step=0,
        )
    return report
