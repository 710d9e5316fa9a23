"""
Modelo de muestra (imagen + verdad de referencia) y métodos de anonimización
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from modules.errors import DatasetError, InputError
from .base import BaseModel
from .grid import CurvedGrid, GridSpec, SpanGrid

Box = Tuple[int, int, int, int]


class AnonymMethod(str, Enum):
    """Métodos de anonimización de las cajas de texto"""

    BLACK = "black"
    MEDIAN = "median"
    GAUSSIAN_BLUR = "gaussian_blur"
    PIXELATION = "pixelation"
    MEAN = "mean"
    NOISE = "noise"

    @property
    def label(self) -> str:
        return {
            "black": "Black",
            "median": "Median",
            "gaussian_blur": "Gaussian blur",
            "pixelation": "Pixelation",
            "mean": "Mean",
            "noise": "Noise",
        }[self.value]

    @classmethod
    def parse(cls, name: str) -> "AnonymMethod":
        """Aceptar el valor, el nombre o la etiqueta, sin distinguir mayúsculas"""
        key = name.strip().lower().replace(" ", "_").replace("-", "_")
        if key == "gaussianblur":
            key = "gaussian_blur"
        for method in cls:
            if key in (method.value, method.name.lower()):
                return method
        raise ValueError(f"método de anonimización desconocido: '{name}'")


@dataclass
class Sample(BaseModel):
    """Imagen (3, H, W) en [0, 1] con su rejilla, spans y cajas de texto"""

    id: str
    image: np.ndarray
    grid: GridSpec
    spans: SpanGrid
    text_boxes: List[Box] = field(default_factory=list)
    curved: Optional[CurvedGrid] = None

    @property
    def height(self) -> int:
        return int(self.image.shape[1])

    @property
    def width(self) -> int:
        return int(self.image.shape[2])

    @property
    def is_complex(self) -> bool:
        return self.spans.is_complex

    def validate(self) -> "Sample":
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise InputError(f"muestra {self.id}: imagen con forma {self.image.shape}, se esperaba (3, H, W)")
        if not np.all(np.isfinite(self.image)) or self.image.min() < 0.0 or self.image.max() > 1.0:
            raise InputError(f"muestra {self.id}: valores de imagen fuera de [0, 1]")
        self.grid.validate()
        self.spans.validate()
        if (self.spans.R, self.spans.C) != (self.grid.R, self.grid.C):
            raise DatasetError(
                f"muestra {self.id}: spans {self.spans.R}x{self.spans.C} vs rejilla {self.grid.R}x{self.grid.C}")
        for x0, y0, x1, y1 in self.text_boxes:
            if not (0 <= x0 <= x1 <= self.width and 0 <= y0 <= y1 <= self.height):
                raise DatasetError(f"muestra {self.id}: caja de texto {(x0, y0, x1, y1)} fuera de la imagen")
        return self

    def with_image(self, image: np.ndarray, **changes) -> "Sample":
        return replace(self, image=image, **changes)

    # ------------------------------------------------------------ JSON Lines
    def to_record(self, image_name: str) -> Dict[str, Any]:
        """Registro JSONL con los nombres de campo del formato de dataset"""
        record = {
            "id": self.id,
            "image": image_name,
            "R": self.grid.R,
            "C": self.grid.C,
            "header_rows": self.grid.H_hdr,
            "row_bounds": [float(v) for v in self.grid.y],
            "col_bounds": [float(v) for v in self.grid.x],
            "cells": [{"r": r, "c": c, "rs": rs, "cs": cs} for r, c, rs, cs in self.spans.anchors()],
            "text_boxes": [[int(v) for v in box] for box in self.text_boxes],
        }
        if self.curved is not None:
            record["curved"] = {"K": self.curved.K, "row_poly": self.curved.row_poly.tolist(),
                                "col_poly": self.curved.col_poly.tolist()}
        return record

    @classmethod
    def from_record(cls, record: Dict[str, Any], image: np.ndarray) -> "Sample":
        try:
            grid = GridSpec(R=int(record["R"]), C=int(record["C"]), H_hdr=int(record["header_rows"]),
                            y=record["row_bounds"], x=record["col_bounds"])
            cells = [(int(c["r"]), int(c["c"]), int(c["rs"]), int(c["cs"])) for c in record["cells"]]
            spans = SpanGrid.from_cells(grid.R, grid.C, cells)
            boxes = [tuple(int(v) for v in box) for box in record.get("text_boxes", [])]
            curved = None
            if "curved" in record:
                data = record["curved"]
                curved = CurvedGrid(base=grid, K=int(data["K"]), row_poly=data["row_poly"],
                                    col_poly=data["col_poly"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"registro inválido '{record.get('id', '?')}': {e}") from e
        return cls(id=str(record["id"]), image=image, grid=grid, spans=spans,
                   text_boxes=boxes, curved=curved).validate()

    def to_dict(self):
        data = self.to_record(f"{self.id}.ppm")
        data["shape"] = list(self.image.shape)
        return data
