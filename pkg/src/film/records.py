"""Per-cell experiment results shared by the UIC and concordance analyses."""

from __future__ import annotations

from dataclasses import dataclass

from .metrics import MetricVector


@dataclass(frozen=True)
class RunRecord:
    variant: int  # 0 is the original dataset, 1..n the resampled versions
    p_min: float
    technique: str
    fold: int
    metrics: MetricVector

    @property
    def key(self) -> tuple:
        return (self.variant, self.technique, self.fold)

    def to_json(self) -> dict:
        return {"variant": self.variant, "p_min": self.p_min, "technique": self.technique,
                "fold": self.fold, "metrics": self.metrics.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(obj["variant"], obj["p_min"], obj["technique"], obj["fold"],
                   MetricVector.from_json(obj["metrics"]))
