"""
Enums for configs and records.
"""
from enum import Enum


class Operation(str, Enum):
    """Binary operation of the modular task."""
    ADD = "add"
    SUB = "sub"
    MUL = "mul"


class SplitRole(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"


class Activation(str, Enum):
    RELU = "relu"


class OptimizerName(str, Enum):
    ADAMW = "adamw"
    SGD = "sgd"


class RegKind(str, Enum):
    """Training penalty added to the cross-entropy loss."""
    NONE = "none"
    NCC = "ncc"
    FLATNESS = "flatness"


class ScheduleKind(str, Enum):
    ALWAYS = "always"
    UNPLUG_AT = "unplug_at"


class NccMode(str, Enum):
    """Whether V_c sums or averages squared deviations over the class."""
    SUM_VARIANCE = "sum_variance"
    MEAN_VARIANCE = "mean_variance"


class FdScheme(str, Enum):
    CENTRAL = "central"
    FORWARD = "forward"


class KdeScale(str, Enum):
    """Feature rescaling applied before the representativeness score."""
    NONE = "none"
    CLASS_RADIUS = "class_radius"
