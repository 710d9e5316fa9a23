"""
Modelos de la estructura lógica de la tabla y de su árbol HTML
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from modules.errors import DatasetError
from .base import BaseModel
from .grid import CellRect, SpanGrid

HTML_LABELS = ("table", "thead", "tbody", "tr", "td")


@dataclass(frozen=True)
class LogicalCell:
    """Celda lógica anclada en (r, c)"""

    r: int
    c: int
    rowspan: int = 1
    colspan: int = 1
    is_header: bool = False

    @property
    def footprint(self) -> Tuple[int, int, int, int]:
        """Caja (r0, c0, r1, c1) semiabierta en índices de rejilla"""
        return self.r, self.c, self.r + self.rowspan, self.c + self.colspan


@dataclass
class TableStructure(BaseModel):
    """Lista canónica de celdas lógicas; la geometría es opcional"""

    R: int
    C: int
    H_hdr: int
    cells: List[LogicalCell]
    geometry: Optional[List[CellRect]] = field(default=None, compare=False)

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda cell: (cell.r, cell.c))

    @classmethod
    def empty(cls) -> "TableStructure":
        return cls(R=0, C=0, H_hdr=0, cells=[])

    def occupancy(self) -> np.ndarray:
        """Matriz R×C con el índice de la celda que ocupa cada posición"""
        grid = -np.ones((self.R, self.C), dtype=np.int64)
        for index, cell in enumerate(self.cells):
            r0, c0, r1, c1 = cell.footprint
            region = grid[r0:r1, c0:c1]
            if cell.rowspan < 1 or cell.colspan < 1 or region.shape != (cell.rowspan, cell.colspan):
                raise DatasetError(f"la celda ({cell.r}, {cell.c}) se sale de la rejilla {self.R}x{self.C}")
            if np.any(region >= 0):
                raise DatasetError(f"la celda ({cell.r}, {cell.c}) solapa otra celda")
            region[...] = index
        return grid

    def validate(self) -> "TableStructure":
        if not 0 <= self.H_hdr <= self.R:
            raise DatasetError(f"H_hdr={self.H_hdr} fuera de [0, {self.R}]")
        grid = self.occupancy()
        if np.any(grid < 0):
            r, c = np.argwhere(grid < 0)[0]
            raise DatasetError(f"la posición ({r}, {c}) no está cubierta por ninguna celda")
        for cell in self.cells:
            if cell.is_header != (cell.r < self.H_hdr):
                raise DatasetError(f"bandera de cabecera incoherente en ({cell.r}, {cell.c})")
        return self

    @property
    def is_complex(self) -> bool:
        return any(cell.rowspan > 1 or cell.colspan > 1 for cell in self.cells)

    def row_cells(self, r: int) -> Iterator[LogicalCell]:
        return (cell for cell in self.cells if cell.r == r)

    def to_span_grid(self) -> SpanGrid:
        return SpanGrid.from_cells(self.R, self.C, [(c.r, c.c, c.rowspan, c.colspan) for c in self.cells])

    def to_dict(self):
        return {
            "R": self.R,
            "C": self.C,
            "H_hdr": self.H_hdr,
            "cells": [{"r": c.r, "c": c.c, "rs": c.rowspan, "cs": c.colspan} for c in self.cells],
        }


@dataclass
class HtmlNode:
    """Nodo del árbol HTML de estructura (sin texto)"""

    label: str
    rowspan: int = 1
    colspan: int = 1
    children: List["HtmlNode"] = field(default_factory=list)

    def size(self) -> int:
        return 1 + sum(child.size() for child in self.children)

    def same_label(self, other: "HtmlNode") -> bool:
        """Igualdad de nodo: etiqueta y atributos de span"""
        return (self.label == other.label and self.rowspan == other.rowspan
                and self.colspan == other.colspan)

    def postorder(self) -> List["HtmlNode"]:
        nodes: List[HtmlNode] = []
        for child in self.children:
            nodes.extend(child.postorder())
        nodes.append(self)
        return nodes
