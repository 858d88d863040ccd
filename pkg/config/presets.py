"""
Named experiment presets.
Each entry is validated on use (ExperimentConfig or EtfGridConfig), so keys must
match the config models exactly.
"""
from config.settings import (
    DEFAULT_HIDDEN_WIDTHS,
    DEFAULT_MODULUS,
    DEFAULT_STEPS,
    FLATNESS_REG_LAMBDA,
    KDE_TRACKING_SAMPLE_WEIGHT,
    NCC_REG_CAP,
    NCC_REG_LAMBDA,
)

# Shared task/model/optimizer setup: p=31 addition, 50/50 split, AdamW with wd=1.0
_GROKKING_BASE = {
    "steps": DEFAULT_STEPS,
    "measure_every": 100,
    "task": {"p": DEFAULT_MODULUS, "op": "add", "split_fraction": 0.5},
    "model": {"hidden_widths": list(DEFAULT_HIDDEN_WIDTHS)},
    "optimizer": {"name": "adamw", "lr": 1e-3, "weight_decay": 1.0},
    "kde": {"sample_weight": KDE_TRACKING_SAMPLE_WEIGHT},
}


def _preset(name: str, **overrides) -> dict:
    preset = {key: (dict(value) if isinstance(value, dict) else value) for key, value in _GROKKING_BASE.items()}
    preset["name"] = name
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(preset.get(key), dict):
            preset[key] = {**preset[key], **value}
        else:
            preset[key] = value
    return preset


PRESETS = {
    # Delayed generalization without any penalty
    "grok-baseline": _preset("grok-baseline"),

    # Collapse suppressed for the whole run: within-class variance is pushed up until
    # NCC reaches the cap, class means and their distances are left to the CE loss
    "ncc-reg": _preset(
        "ncc-reg",
        reg={
            "kind": "ncc",
            "lambda_reg": NCC_REG_LAMBDA,
            "schedule": "always",
            "stop_gradient": True,
            "ncc_cap": NCC_REG_CAP,
        },
    ),

    # Flatness suppressed past the baseline's generalization onset, then unplugged
    "sharp-reg-unplug": _preset(
        "sharp-reg-unplug",
        reg={
            "kind": "flatness",
            "lambda_reg": FLATNESS_REG_LAMBDA,
            "schedule": "unplug_at",
            "unplug_epoch": DEFAULT_STEPS // 3,
        },
    ),

    # Finer measurement stride plus validation-set NCC
    "rep-track": _preset("rep-track", measure_every=50, log_val_ncc=True),

    # No training: simplex ETF grid for the collapse-implies-flatness check
    "etf-verify": {
        "ks": [2, 3, 10],
        "Ms": [0.5, 1.0, 2.0],
        "lambdas": [1.0, 2.0, 4.0, 8.0],
        "decay_margins": [20.0, 30.0, 40.0, 50.0],
        "decay_slope_rtol": 0.2,
        "extra_dims": 1,
        "tol": 1e-9,
    },
}

TRAINING_PRESETS = frozenset(name for name, preset in PRESETS.items() if "task" in preset)
