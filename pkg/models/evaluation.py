"""
Modelos del informe de evaluación (esquema versionado)
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config import DEFAULTS
from .base import BaseModel

METRIC_COLUMNS = {
    "steds": ["steds"],
    "grits": ["grits"],
    "car": ["car_precision", "car_recall", "car_f1"],
}


@dataclass
class EvaluationRecord(BaseModel):
    """Puntuaciones de una muestra"""

    id: str
    complex: bool
    steds: Optional[float] = None
    grits: Optional[float] = None
    car_precision: Optional[float] = None
    car_recall: Optional[float] = None
    car_f1: Optional[float] = None
    latency_ms: Optional[float] = None


@dataclass
class EvaluationReport(BaseModel):
    """Puntuaciones por muestra más agregados global, simple y complejo"""

    metrics: List[str]
    records: List[EvaluationRecord] = field(default_factory=list)
    label: str = "Baseline"
    schema: int = DEFAULTS["report_schema"]
    extra: Dict[str, Any] = field(default_factory=dict)

    def columns(self) -> List[str]:
        return [column for metric in self.metrics for column in METRIC_COLUMNS[metric]]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.to_dict() for r in self.records])
        if frame.empty:
            frame = pd.DataFrame(columns=["id", "complex"] + self.columns())
        return frame

    def aggregate(self) -> Dict[str, Dict[str, Any]]:
        """Medias por subconjunto; None cuando el subconjunto está vacío"""
        frame = self.to_frame()
        columns = self.columns()
        subsets = {
            "overall": frame,
            "simple": frame[~frame["complex"].astype(bool)],
            "complex": frame[frame["complex"].astype(bool)],
        }
        result = {}
        for name, subset in subsets.items():
            entry: Dict[str, Any] = {"count": int(len(subset))}
            for column in columns:
                values = pd.to_numeric(subset[column], errors="coerce").dropna()
                entry[column] = float(values.mean()) if len(values) else None
            result[name] = entry
        return result

    def mean(self, column: str, subset: str = "overall") -> Optional[float]:
        return self.aggregate()[subset].get(column)

    def latency_summary(self) -> Dict[str, Optional[float]]:
        frame = self.to_frame()
        if "latency_ms" not in frame or frame["latency_ms"].dropna().empty:
            return {"p50_ms": None, "p95_ms": None, "mean_ms": None}
        values = frame["latency_ms"].dropna().to_numpy(dtype=np.float64)
        return {
            "p50_ms": float(np.percentile(values, 50)),
            "p95_ms": float(np.percentile(values, 95)),
            "mean_ms": float(values.mean()),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "label": self.label,
            "metrics": list(self.metrics),
            "aggregate": self.aggregate(),
            "samples": [r.to_dict() for r in self.records],
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(metrics=list(data["metrics"]),
                   records=[EvaluationRecord.from_dict(r) for r in data.get("samples", [])],
                   label=data.get("label", "Baseline"), schema=data.get("schema", 1),
                   extra=data.get("extra", {}))
