"""
Load experiment configurations from TOML files, presets and CLI overrides.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin

from pydantic import BaseModel, ValidationError

from config.presets import PRESETS, TRAINING_PRESETS
from models.configs import EtfGridConfig, ExperimentConfig
from utils.errors import ConfigError
from utils.logger import log


class InputProcessor:
    """Builds validated configs from files and presets."""

    def load_file(self, filepath: str) -> ExperimentConfig:
        """
        Parse a TOML experiment file.

        Top-level keys are run settings; [task], [model], [optimizer], [reg]
        and [kde] sections fill the nested configs. Unknown keys are errors.
        """
        filepath = Path(filepath)
        if not filepath.exists():
            raise ConfigError(f"config file not found: {filepath}")
        if filepath.suffix.lower() != ".toml":
            raise ConfigError(f"unsupported config file type: {filepath.suffix} (expected .toml)")

        log.info(f"Loading config from: {filepath}")
        try:
            with open(filepath, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{filepath}: {e}") from e
        return self.validate(data, source=str(filepath))

    def load_preset(self, name: str) -> ExperimentConfig:
        if name not in TRAINING_PRESETS:
            raise ConfigError(f"unknown training preset '{name}'; available: {', '.join(sorted(TRAINING_PRESETS))}")
        return self.validate(PRESETS[name], source=f"preset {name}")

    def load_etf_grid(self, name: str = "etf-verify") -> EtfGridConfig:
        if name not in PRESETS or name in TRAINING_PRESETS:
            raise ConfigError(f"'{name}' is not an ETF grid preset")
        return self._validate_model(EtfGridConfig, PRESETS[name], f"preset {name}")

    def validate(self, data: Dict[str, Any], source: str = "config") -> ExperimentConfig:
        return self._validate_model(ExperimentConfig, data, source)

    @staticmethod
    def _validate_model(model: type, data: Dict[str, Any], source: str) -> BaseModel:
        try:
            return model.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"{source}: {problems}") from e

    def resolve(
        self,
        config_path: Optional[str] = None,
        preset: Optional[str] = None,
        seed: Optional[int] = None,
        output_dir: Optional[str] = None,
        deterministic: Optional[bool] = None,
    ) -> ExperimentConfig:
        """Config file or preset, then CLI overrides."""
        if config_path and preset:
            raise ConfigError("pass either --config or --preset, not both")
        if config_path:
            cfg = self.load_file(config_path)
        else:
            cfg = self.load_preset(preset or "grok-baseline")

        overrides: Dict[str, Any] = {}
        if seed is not None:
            overrides["seeds"] = [seed]
        if output_dir is not None:
            overrides["output_dir"] = output_dir
        if deterministic is not None:
            overrides["deterministic"] = deterministic
        if overrides:
            cfg = self.validate({**cfg.model_dump(), **overrides}, source="overrides")
        return cfg


def scalar_field_paths(model: type = ExperimentConfig, prefix: str = "") -> List[str]:
    """Dotted names of all scalar fields (sweepable parameters)."""
    paths = []
    for name, field in model.model_fields.items():
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            paths.extend(scalar_field_paths(annotation, f"{prefix}{name}."))
        elif annotation in (int, float, bool, str) or (
            isinstance(annotation, type) and issubclass(annotation, (int, float, str))
        ):
            paths.append(f"{prefix}{name}")
        elif get_origin(annotation) is Union and any(a in (int, float) for a in get_args(annotation)):
            paths.append(f"{prefix}{name}")
    return paths


def set_path(data: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Copy of a nested dict with ``path`` (dotted) set to ``value``."""
    head, _, rest = path.partition(".")
    out = dict(data)
    if rest:
        out[head] = set_path(out.get(head, {}), rest, value)
    else:
        out[head] = value
    return out
