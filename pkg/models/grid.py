"""
Modelos de la rejilla: fronteras, spans, rectángulos de celda y polilíneas curvas
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import ConsistencyError, DatasetError
from .base import BaseModel

BOUNDARY_TOL = 1e-9


def _check_boundaries(values: np.ndarray, count: int, axis: str):
    if values.shape != (count + 1,):
        raise DatasetError(f"fronteras {axis}: se esperaban {count + 1} valores, hay {values.shape}")
    if abs(values[0]) > BOUNDARY_TOL or abs(values[-1] - 1.0) > BOUNDARY_TOL:
        raise DatasetError(f"fronteras {axis} deben empezar en 0 y terminar en 1: {values.tolist()}")
    if np.any(np.diff(values) < -BOUNDARY_TOL):
        raise DatasetError(f"fronteras {axis} no ordenadas: {values.tolist()}")


@dataclass
class GridSpec(BaseModel):
    """Conteos, filas de cabecera y fronteras normalizadas y ordenadas"""

    R: int
    C: int
    H_hdr: int
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)

    def validate(self) -> "GridSpec":
        if self.R < 1 or self.C < 1:
            raise DatasetError(f"la rejilla necesita R, C >= 1 (R={self.R}, C={self.C})")
        if not 0 <= self.H_hdr <= self.R:
            raise DatasetError(f"H_hdr={self.H_hdr} fuera de [0, {self.R}]")
        _check_boundaries(self.y, self.R, "y")
        _check_boundaries(self.x, self.C, "x")
        return self

    @classmethod
    def uniform(cls, R: int, C: int, H_hdr: int = 0) -> "GridSpec":
        return cls(R=R, C=C, H_hdr=H_hdr, y=np.linspace(0.0, 1.0, R + 1),
                   x=np.linspace(0.0, 1.0, C + 1))

    def copy(self) -> "GridSpec":
        return GridSpec(self.R, self.C, self.H_hdr, self.y.copy(), self.x.copy())


@dataclass
class CellRect(BaseModel):
    """Región rectangular normalizada de la celda (r, c)"""

    r: int
    c: int
    x0: float
    y0: float
    x1: float
    y1: float


@dataclass
class SpanGrid(BaseModel):
    """rowspan/colspan por posición y rol (ancla o cubierta)"""

    rs: np.ndarray
    cs: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        self.rs = np.asarray(self.rs, dtype=np.int64)
        self.cs = np.asarray(self.cs, dtype=np.int64)
        self.anchor = np.asarray(self.anchor, dtype=bool)

    @property
    def R(self) -> int:
        return int(self.rs.shape[0])

    @property
    def C(self) -> int:
        return int(self.rs.shape[1]) if self.rs.ndim == 2 else 0

    def anchors(self) -> Iterator[Tuple[int, int, int, int]]:
        """Iterar (r, c, rs, cs) en orden de filas"""
        for r, c in zip(*np.nonzero(self.anchor)):
            yield int(r), int(c), int(self.rs[r, c]), int(self.cs[r, c])

    @property
    def is_complex(self) -> bool:
        return any(rs > 1 or cs > 1 for _, _, rs, cs in self.anchors())

    @classmethod
    def simple(cls, R: int, C: int) -> "SpanGrid":
        ones = np.ones((R, C), dtype=np.int64)
        return cls(rs=ones, cs=ones.copy(), anchor=np.ones((R, C), dtype=bool))

    @classmethod
    def from_cells(cls, R: int, C: int, cells: Sequence[Tuple[int, int, int, int]]) -> "SpanGrid":
        """Construir desde celdas (r, c, rs, cs); las posiciones no listadas quedan cubiertas"""
        rs = np.ones((R, C), dtype=np.int64)
        cs = np.ones((R, C), dtype=np.int64)
        anchor = np.zeros((R, C), dtype=bool)
        for r, c, rspan, cspan in cells:
            rs[r, c] = rspan
            cs[r, c] = cspan
            anchor[r, c] = True
        return cls(rs=rs, cs=cs, anchor=anchor).validate()

    def owner_map(self) -> np.ndarray:
        """Matriz R×C con el índice plano del ancla que ocupa cada posición"""
        owner = -np.ones((self.R, self.C), dtype=np.int64)
        for r, c, rspan, cspan in self.anchors():
            region = owner[r:r + rspan, c:c + cspan]
            if region.shape != (rspan, cspan) or np.any(region >= 0):
                raise DatasetError(f"el ancla ({r}, {c}) con span {rspan}x{cspan} solapa o se sale")
            region[...] = r * self.C + c
        return owner

    def validate(self, RS_max: Optional[int] = None, CS_max: Optional[int] = None) -> "SpanGrid":
        if self.rs.shape != self.cs.shape or self.rs.shape != self.anchor.shape or self.rs.ndim != 2:
            raise ConsistencyError(
                f"rs {self.rs.shape}, cs {self.cs.shape} y roles {self.anchor.shape} difieren")
        for r, c, rspan, cspan in self.anchors():
            if rspan < 1 or cspan < 1:
                raise DatasetError(f"span no positivo en ({r}, {c})")
            if RS_max is not None and rspan > RS_max:
                raise DatasetError(f"rowspan {rspan} en ({r}, {c}) supera RS_max={RS_max}")
            if CS_max is not None and cspan > CS_max:
                raise DatasetError(f"colspan {cspan} en ({r}, {c}) supera CS_max={CS_max}")
        owner = self.owner_map()
        if np.any(owner < 0):
            r, c = np.argwhere(owner < 0)[0]
            raise DatasetError(f"la posición ({r}, {c}) no pertenece a ningún ancla")
        return self


@dataclass
class CurvedGrid(BaseModel):
    """Fronteras como polilíneas de K puntos sobre la rejilla recta"""

    base: GridSpec
    K: int
    row_poly: np.ndarray
    col_poly: np.ndarray
    bound: float = 0.0

    def __post_init__(self):
        self.row_poly = np.asarray(self.row_poly, dtype=np.float64)
        self.col_poly = np.asarray(self.col_poly, dtype=np.float64)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K)

    @classmethod
    def straight(cls, base: GridSpec, K: int) -> "CurvedGrid":
        return cls(base=base, K=K,
                   row_poly=np.repeat(base.y[:, None], K, axis=1),
                   col_poly=np.repeat(base.x[:, None], K, axis=1))

    def to_dict(self):
        return {"base": self.base.to_dict(), "K": self.K, "row_poly": self.row_poly.tolist(),
                "col_poly": self.col_poly.tolist(), "bound": self.bound}

    @classmethod
    def from_dict(cls, data):
        return cls(base=GridSpec.from_dict(data["base"]), K=data["K"], row_poly=data["row_poly"],
                   col_poly=data["col_poly"], bound=data.get("bound", 0.0))
