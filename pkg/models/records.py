"""
Measurement records: geometry snapshots and the per-step metrics stream.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from config.settings import METRICS_COLUMNS


class GeometryReport(BaseModel):
    """One snapshot of the penultimate-layer geometry."""
    step: int = 0
    ncc: float
    kappa: float
    kappa_simplified: float
    mean_angle_dev: float
    representativeness: float

    @model_validator(mode="after")
    def _check_simplified_bound(self):
        # kappa <= ||w||^2 Tr(H); NaN entries (undefined metrics) are exempt
        bound = self.kappa_simplified + 1e-9 * abs(self.kappa_simplified)
        if self.kappa == self.kappa and bound == bound and self.kappa > bound:
            raise ValueError(f"kappa {self.kappa!r} exceeds simplified bound {self.kappa_simplified!r}")
        return self


class MetricsRecord(BaseModel):
    """One row of the metrics CSV."""
    step: int = Field(..., ge=0)
    epoch: int = Field(..., ge=0)
    train_loss: float
    val_loss: float
    train_acc: float = Field(..., ge=0.0, le=1.0)
    val_acc: float = Field(..., ge=0.0, le=1.0)
    gen_gap: float
    ncc: float
    kappa: float
    kappa_simplified: float
    mean_angle_dev: float
    representativeness: float
    effective_reg_coeff: float

    def as_row(self) -> Dict[str, float]:
        return {col: getattr(self, col) for col in METRICS_COLUMNS}


class MetricsLog(BaseModel):
    """Metrics of one run (one seed)."""
    seed: Optional[int] = None
    records: List[MetricsRecord] = Field(default_factory=list)
    val_ncc: List[float] = Field(default_factory=list, description="Filled when log_val_ncc is set")

    @field_validator("records")
    @classmethod
    def _check_steps(cls, records: List[MetricsRecord]) -> List[MetricsRecord]:
        steps = [r.step for r in records]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("steps must be strictly increasing")
        return records

    def append(self, record: MetricsRecord):
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(f"step {record.step} does not follow {self.records[-1].step}")
        self.records.append(record)

    def column(self, name: str) -> List[float]:
        return [getattr(r, name) for r in self.records]

    def __len__(self) -> int:
        return len(self.records)
