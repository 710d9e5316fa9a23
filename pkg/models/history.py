"""
Modelo para el historial de entrenamiento
"""

import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional

import pandas as pd

from .base import BaseModel

LOSS_TERMS = ("loss_counts", "loss_header", "loss_boundaries", "loss_spans",
              "loss_smooth", "loss_noncross", "loss_curved")


@dataclass
class LossBreakdown(BaseModel):
    """Términos de la pérdida (valores escalares) y su total ponderado"""

    loss_counts: float = 0.0
    loss_header: float = 0.0
    loss_boundaries: float = 0.0
    loss_spans: float = 0.0
    loss_smooth: float = 0.0
    loss_noncross: float = 0.0
    loss_curved: float = 0.0
    total: float = 0.0

    def terms(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in LOSS_TERMS}

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.to_dict().values())

    def describe(self) -> str:
        parts = ", ".join(f"{name[5:]}={value:.6f}" for name, value in self.terms().items())
        return f"total={self.total:.6f} ({parts})"

    @classmethod
    def mean(cls, items: List["LossBreakdown"]) -> "LossBreakdown":
        if not items:
            return cls()
        frame = pd.DataFrame([item.to_dict() for item in items])
        return cls(**{k: float(v) for k, v in frame.mean().items()})


@dataclass
class TrainingHistory(BaseModel):
    """Historial de una ejecución de entrenamiento (una entrada por época)"""

    run_id: str
    seed: int
    config_name: str = "custom"
    status: str = "pending"
    epochs: List[LossBreakdown] = field(default_factory=list)
    steps: int = 0
    execution_time: Optional[float] = None
    error_message: Optional[str] = None
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None

    def __post_init__(self):
        self._clock: Optional[float] = None

    def start_processing(self) -> "TrainingHistory":
        """Marcar como iniciado el entrenamiento"""
        self.status = "processing"
        self.started_at = datetime.now()
        self._clock = time.perf_counter()
        return self

    def record_epoch(self, breakdown: LossBreakdown, steps: int) -> "TrainingHistory":
        self.epochs.append(breakdown)
        self.steps += steps
        return self

    def complete_successfully(self) -> "TrainingHistory":
        """Marcar como completado"""
        self.status = "completed"
        self.completed_at = datetime.now()
        self.execution_time = self._elapsed()
        return self

    def fail_with_error(self, error_message: str) -> "TrainingHistory":
        """Marcar como fallido"""
        self.status = "failed"
        self.error_message = error_message
        self.completed_at = datetime.now()
        self.execution_time = self._elapsed()
        return self

    def _elapsed(self) -> Optional[float]:
        return None if self._clock is None else round(time.perf_counter() - self._clock, 3)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([e.to_dict() for e in self.epochs])
        frame.index.name = "epoch"
        return frame

    def loss_log(self) -> List[Dict[str, float]]:
        """Registro determinista de pérdidas (sin marcas de tiempo)"""
        return [e.to_dict() for e in self.epochs]

    def get_summary(self) -> Dict:
        """Obtener resumen del entrenamiento"""
        last = self.epochs[-1] if self.epochs else None
        return {
            "run_id": self.run_id,
            "config_name": self.config_name,
            "seed": self.seed,
            "status": self.status,
            "epochs": len(self.epochs),
            "steps": self.steps,
            "final_loss": last.to_dict() if last else None,
            "execution_time": self.execution_time,
            "error_message": self.error_message,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "completed_at": self.completed_at.isoformat() if self.completed_at else None,
        }

    @classmethod
    def from_dict(cls, data):
        epochs = [LossBreakdown.from_dict(e) for e in data.get("epochs", [])]
        history = cls(run_id=data["run_id"], seed=data["seed"],
                      config_name=data.get("config_name", "custom"),
                      status=data.get("status", "pending"), epochs=epochs,
                      steps=data.get("steps", 0), execution_time=data.get("execution_time"),
                      error_message=data.get("error_message"))
        return history
