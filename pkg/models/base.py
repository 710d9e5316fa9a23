"""
Modelo base para los tipos de datos de FastTab
"""

import json
from dataclasses import asdict, fields, is_dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np


def to_jsonable(value: Any) -> Any:
    """Convertir valores (numpy, enums, fechas, dataclasses) a tipos JSON"""
    if isinstance(value, BaseModel):
        return value.to_dict()
    if is_dataclass(value):
        return to_jsonable(asdict(value))
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


class BaseModel:
    """Clase base para todos los tipos de datos (dataclasses)"""

    def to_dict(self) -> Dict[str, Any]:
        """Convertir el modelo a diccionario serializable"""
        result = {}
        for f in fields(self):
            result[f.name] = to_jsonable(getattr(self, f.name))
        return result

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        """Construir el modelo desde un diccionario"""
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def save_json(self, path: Union[str, Path]) -> Path:
        """Guardar el modelo como JSON"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path
