"""
Exception hierarchy shared by all modules.
"""
from typing import Optional, Sequence


class GeometryLabError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(GeometryLabError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, operation: str, *shapes: Sequence[int]):
        self.operation = operation
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " vs ".join("x".join(str(n) for n in s) or "scalar" for s in self.shapes)
        super().__init__(f"{operation}: incompatible shapes {rendered}")

    def __reduce__(self):
        return type(self), (self.operation, *self.shapes)


class EmptyClassError(GeometryLabError, ValueError):
    """A class has no samples."""

    def __init__(self, label: int):
        self.label = label
        super().__init__(f"class {label} has no samples")

    def __reduce__(self):
        return type(self), (self.label,)


class CollapsedMeansError(GeometryLabError, ValueError):
    """Two class means coincide (or a centered mean vanishes)."""

    def __init__(self, first: int, second: Optional[int] = None):
        self.classes = (first,) if second is None else (first, second)
        if second is None:
            msg = f"centered mean of class {first} is zero"
        else:
            msg = f"class means {first} and {second} coincide"
        super().__init__(msg)

    def __reduce__(self):
        return type(self), self.classes


class StaleCacheError(GeometryLabError, RuntimeError):
    """A forward cache was used after the parameters it came from changed."""


class OracleError(GeometryLabError, ArithmeticError):
    """A finite-difference evaluation produced a non-finite value."""

    def __init__(self, coordinate, value: float):
        self.coordinate = coordinate
        self.value = value
        super().__init__(f"non-finite evaluation {value!r} at coordinate {coordinate}")

    def __reduce__(self):
        return type(self), (self.coordinate, self.value)


class ConfigError(GeometryLabError, ValueError):
    """Invalid or unknown configuration."""


class ExperimentError(GeometryLabError, RuntimeError):
    """A run aborted; carries the seed and step where it happened."""

    def __init__(self, seed: int, step: int, cause: BaseException):
        self.seed = seed
        self.step = step
        self.cause = cause
        super().__init__(f"run aborted at seed={seed} step={step}: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return type(self), (self.seed, self.step, self.cause)


class OutputError(GeometryLabError, OSError):
    """Writing or reading a result file failed."""

    def __init__(self, path, cause: BaseException):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")

    def __reduce__(self):
        return type(self), (self.path, self.cause)


class GradientCheckError(GeometryLabError, ArithmeticError):
    """An analytic gradient disagrees with its finite-difference estimate."""

    def __init__(self, name: str, rel_error: float, rtol: float):
        self.name = name
        self.rel_error = rel_error
        self.rtol = rtol
        super().__init__(f"{name} gradient check failed: relative error {rel_error:.3e} > {rtol:.1e}")

    def __reduce__(self):
        return type(self), (self.name, self.rel_error, self.rtol)


class VerificationError(GeometryLabError, AssertionError):
    """A numerical verification (ETF grid, bound) did not hold."""
