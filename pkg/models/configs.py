"""
Pydantic models for task, model, optimizer, regularizer and experiment configuration.
"""
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import settings
from .enums import (
    Activation, FdScheme, KdeScale, NccMode, Operation, OptimizerName, RegKind, ScheduleKind,
    SplitRole,
)


class StrictModel(BaseModel):
    """Base model: unknown keys are errors, enums are stored as their values."""
    model_config = ConfigDict(extra="forbid", use_enum_values=True)


class ModTaskConfig(StrictModel):
    """Modular-arithmetic task: all pairs (a, b) in [0, p)^2 labelled (a op b) mod p."""
    p: int = Field(settings.DEFAULT_MODULUS, ge=2, description="Modulus (prime)")
    op: Operation = Field(Operation.ADD, description="Binary operation")
    split_fraction: float = Field(settings.DEFAULT_SPLIT_FRACTION, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0, description="Seed of the split permutation")


class TaskSection(StrictModel):
    """Task section of an experiment; the split seed follows the run seed."""
    p: int = Field(settings.DEFAULT_MODULUS, ge=2)
    op: Operation = Operation.ADD
    split_fraction: float = Field(settings.DEFAULT_SPLIT_FRACTION, gt=0.0, lt=1.0)


class MlpConfig(StrictModel):
    """Full layer widths: input dim, hidden dims..., class count."""
    layer_widths: List[int]
    activation: Activation = Activation.RELU
    init_scale: float = Field(1.0, gt=0.0, description="Multiplier on the 1/sqrt(fan_in) std")
    seed: int = Field(0, ge=0)

    @field_validator("layer_widths")
    @classmethod
    def _check_widths(cls, widths: List[int]) -> List[int]:
        if len(widths) < 3:
            raise ValueError(f"need input, at least one hidden and an output width, got {widths}")
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be positive, got {widths}")
        return widths

    @property
    def num_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def feature_dim(self) -> int:
        return self.layer_widths[-2]


class ModelSection(StrictModel):
    """Model section of an experiment; input and output widths follow from the task."""
    hidden_widths: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_HIDDEN_WIDTHS), min_length=1)
    activation: Activation = Activation.RELU
    init_scale: float = Field(1.0, gt=0.0)


class OptimizerConfig(StrictModel):
    name: OptimizerName = OptimizerName.ADAMW
    lr: float = Field(settings.DEFAULT_LR, gt=0.0)
    beta1: float = Field(settings.ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(settings.ADAM_BETA2, ge=0.0, lt=1.0)
    eps: float = Field(settings.ADAM_EPS, gt=0.0)
    weight_decay: float = Field(settings.DEFAULT_WEIGHT_DECAY, ge=0.0)
    momentum: float = Field(settings.SGD_MOMENTUM, ge=0.0, lt=1.0, description="SGD only")
    batch_size: Optional[int] = Field(None, ge=1, description="None = full batch")


class RegConfig(StrictModel):
    """
    Training penalty. Both penalties are SUBTRACTED from the loss:

        loss = CE - lambda_reg * NCC       (kind = ncc, pushes NCC up: less collapse)
        loss = CE - lambda_reg * kappa     (kind = flatness, pushes kappa up: sharper)

    so a positive coefficient suppresses collapse or flatness respectively.
    """
    kind: RegKind = RegKind.NONE
    lambda_reg: float = Field(0.0, ge=0.0)
    schedule: ScheduleKind = ScheduleKind.ALWAYS
    unplug_epoch: Optional[int] = Field(None, ge=0)
    stop_gradient: bool = Field(
        False,
        description="flatness: probs held fixed; ncc: class means and mean distances held fixed",
    )
    ncc_cap: Optional[float] = Field(
        None, gt=0.0, description="ncc only: no penalty gradient while the measured NCC is at or above this value",
    )

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.schedule == ScheduleKind.UNPLUG_AT and self.unplug_epoch is None:
            raise ValueError("schedule 'unplug_at' requires unplug_epoch")
        if self.ncc_cap is not None and self.kind != RegKind.NCC:
            raise ValueError("ncc_cap applies only to kind 'ncc'")
        return self


class KdeConfig(StrictModel):
    bandwidth: float = Field(settings.KDE_BANDWIDTH, gt=0.0)
    sample_weight: float = Field(settings.KDE_SAMPLE_WEIGHT, gt=0.0)
    feature_scale: KdeScale = KdeScale.CLASS_RADIUS
    radius: float = Field(
        settings.KDE_CLASS_RADIUS, gt=0.0,
        description="RMS class-mean radius of the train features after class_radius scaling",
    )


class EtfConfig(StrictModel):
    """Synthetic neural-collapse configuration."""
    k: int = Field(..., ge=2)
    d: int = Field(..., ge=2)
    M: float = Field(..., gt=0.0)
    lambda_nc: float = Field(..., gt=0.0)
    bias_base: float = 0.0
    global_mean_scale: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_dims(self):
        if self.d < self.k:
            raise ValueError(f"feature dimension d={self.d} must be >= class count k={self.k}")
        return self


class FdConfig(StrictModel):
    epsilon: float = Field(settings.FD_EPSILON, gt=0.0)
    hessian_epsilon: float = Field(settings.FD_HESSIAN_EPSILON, gt=0.0)
    scheme: FdScheme = FdScheme.CENTRAL


class ExperimentConfig(StrictModel):
    """Declarative description of one experiment (one run per seed)."""
    name: str = "experiment"
    steps: int = Field(settings.DEFAULT_STEPS, ge=0)
    measure_every: int = Field(settings.DEFAULT_MEASURE_EVERY, ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_SEEDS), min_length=1)
    ncc_mode: NccMode = NccMode.MEAN_VARIANCE
    geometry_split: SplitRole = SplitRole.TRAIN
    log_val_ncc: bool = False
    debug_grad_checks: bool = False
    deterministic: bool = settings.DETERMINISTIC
    save_checkpoint: bool = settings.CHECKPOINT_ENABLED
    output_dir: Optional[Path] = None

    task: TaskSection = Field(default_factory=TaskSection)
    model: ModelSection = Field(default_factory=ModelSection)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    reg: RegConfig = Field(default_factory=RegConfig)
    kde: KdeConfig = Field(default_factory=KdeConfig)

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, seeds: List[int]) -> List[int]:
        if any(s < 0 for s in seeds):
            raise ValueError(f"seeds must be nonnegative, got {seeds}")
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"duplicate seeds: {seeds}")
        return seeds

    def mlp_config(self, seed: int) -> MlpConfig:
        p = self.task.p
        return MlpConfig(
            layer_widths=[2 * p, *self.model.hidden_widths, p],
            activation=self.model.activation,
            init_scale=self.model.init_scale,
            seed=seed,
        )

    def task_config(self, seed: int) -> ModTaskConfig:
        return ModTaskConfig(**self.task.model_dump(), seed=seed)


class EtfGridConfig(StrictModel):
    """Grid of ETF configurations for the neural-collapse-implies-flatness check."""
    ks: List[int] = Field(default_factory=lambda: [2, 3, 10], min_length=1)
    Ms: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0], min_length=1)
    lambdas: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0], min_length=2)
    decay_margins: List[float] = Field(
        default_factory=lambda: [20.0, 30.0, 40.0, 50.0], min_length=2,
        description="Values of lambda*delta at which the exponential decay rate is measured",
    )
    decay_slope_rtol: float = Field(0.2, gt=0.0)
    extra_dims: int = Field(1, ge=0, description="d = k + extra_dims")
    bias_base: float = 0.0
    global_mean_scale: float = Field(1.0, ge=0.0)
    tol: float = Field(1e-9, gt=0.0)
    seed: int = Field(0, ge=0)

    def cells(self) -> List[Tuple[int, float]]:
        return [(k, M) for k in self.ks for M in self.Ms]
