"""
One-parameter sweeps: independent experiments per value, each in its own subdirectory.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from config.settings import OUTPUT_DIR
from models.configs import ExperimentConfig
from models.records import MetricsLog
from processors.input_processor import InputProcessor, scalar_field_paths, set_path
from runners.experiment_runner import ExperimentRunner
from utils.errors import ConfigError
from utils.logger import log


def value_dirname(parameter: str, value: Any) -> str:
    """Subdirectory name of one sweep value, e.g. ``reg.lambda_reg=0.001``."""
    text = str(value).lower() if isinstance(value, bool) else str(value)
    return f"{parameter}={text}".replace("/", "_")


def sweep_configs(base: ExperimentConfig, parameter: str, values: Sequence[Any]) -> List[ExperimentConfig]:
    """Validated copies of ``base`` with ``parameter`` set to each value."""
    valid = scalar_field_paths()
    if parameter not in valid:
        raise ConfigError(f"unknown sweep parameter '{parameter}'; valid names: {', '.join(valid)}")
    if not values:
        raise ConfigError("sweep needs at least one value")

    processor = InputProcessor()
    data = base.model_dump()
    configs = []
    for value in values:
        name = f"{base.name}@{value_dirname(parameter, value)}"
        swept = set_path(set_path(data, parameter, value), "name", name)
        configs.append(processor.validate(swept, source=f"sweep {parameter}={value}"))
    return configs


def sweep(
    base: ExperimentConfig,
    parameter: str,
    values: Sequence[Any],
    output_dir: Optional[Path] = None,
    workers: int = 1,
) -> Dict[str, List[MetricsLog]]:
    """
    Run ``base`` once per value of ``parameter``. Results land in
    ``<output_dir>/<parameter>=<value>/``; the returned dict is keyed by that
    directory name.
    """
    root = Path(output_dir or base.output_dir or OUTPUT_DIR / f"{base.name}-sweep")
    configs = sweep_configs(base, parameter, values)
    log.info(f"Sweeping {parameter} over {list(values)} ({len(configs)} experiments) into {root}")

    results: Dict[str, List[MetricsLog]] = {}
    for value, cfg in zip(values, configs):
        dirname = value_dirname(parameter, value)
        cfg = cfg.model_copy(update={"output_dir": root / dirname})
        runner = ExperimentRunner(cfg, output_dir=cfg.output_dir, workers=workers)
        results[dirname] = runner.run()
    return results
