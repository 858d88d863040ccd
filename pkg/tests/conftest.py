"""
Shared fixtures and the --run-slow switch.
"""
import numpy as np
import pytest

from models.configs import ExperimentConfig


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run full-length training checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path) -> ExperimentConfig:
    """p=5 addition, 21 train / 4 validation pairs, one hidden layer of 8 units, a handful of steps."""
    return ExperimentConfig.model_validate({
        "name": "tiny",
        "steps": 6,
        "measure_every": 2,
        "seeds": [1],
        "output_dir": str(tmp_path / "tiny"),
        "task": {"p": 5, "op": "add", "split_fraction": 0.85},
        "model": {"hidden_widths": [8]},
        "optimizer": {"lr": 1e-2, "weight_decay": 0.1},
    })


def with_updates(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    """Re-validated copy of ``cfg``; nested sections are merged."""
    data = cfg.model_dump()
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return ExperimentConfig.model_validate(data)
