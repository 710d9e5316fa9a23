"""
Separadores curvos: polilíneas de K puntos como residuos acotados sobre la rejilla recta
"""

from typing import Optional, Tuple

import numpy as np

from models.config import Caps, CurvedConfig
from models.grid import CellRect, CurvedGrid, GridSpec
from .numerics import Module, Rng, Tensor, concat, ensure_tensor, init_weight, interpolation_matrix, linear, zeros


def default_bound(boundaries: np.ndarray) -> float:
    """Mitad del intervalo base más pequeño"""
    gaps = np.diff(np.asarray(boundaries, dtype=np.float64))
    return float(gaps.min()) / 2.0 if gaps.size else 0.0


def curved_polylines(base: Tensor, offsets: Tensor, bound: float) -> Tensor:
    """base[i] + b·tanh(offset[i, k]) con las fronteras exteriores fijadas a 0 y 1"""
    base = ensure_tensor(base)
    offsets = ensure_tensor(offsets)
    count = base.shape[0] - 1
    K = offsets.shape[1]
    dtype = offsets.dtype
    first = Tensor(np.zeros((1, K), dtype=dtype))
    last = Tensor(np.ones((1, K), dtype=dtype))
    if count == 1:
        return concat([first, last])
    interior = base[1:count].reshape(-1, 1) + offsets[1:count].tanh() * bound
    return concat([first, interior, last])


def decode_curved(base: GridSpec, row_offsets, col_offsets, bound: Optional[float] = None) -> CurvedGrid:
    """Decodificar polilíneas acotadas; b por defecto es la mitad del menor intervalo base"""
    row_offsets = ensure_tensor(row_offsets)
    col_offsets = ensure_tensor(col_offsets)
    K = row_offsets.shape[1]
    if bound is None:
        bound = min(default_bound(base.y), default_bound(base.x))
    rows = curved_polylines(Tensor(base.y), row_offsets[:base.R + 1], bound)
    cols = curved_polylines(Tensor(base.x), col_offsets[:base.C + 1], bound)
    return CurvedGrid(base=base, K=K, row_poly=rows.data.astype(np.float64),
                      col_poly=cols.data.astype(np.float64), bound=bound)


def smoothness_penalty(poly: Tensor) -> Tensor:
    """Σ_k (p[k+1] − 2p[k] + p[k−1])² sobre el último eje; 0 si K < 3"""
    poly = ensure_tensor(poly)
    K = poly.shape[-1]
    if K < 3:
        return Tensor(np.zeros((), dtype=poly.dtype))
    second = poly[..., 2:] - poly[..., 1:-1] * 2.0 + poly[..., :-2]
    return (second * second).sum()


def non_crossing_penalty(polys: Tensor) -> Tensor:
    """Σ_i Σ_k max(0, p_i(t_k) − p_{i+1}(t_k))²"""
    polys = ensure_tensor(polys)
    if polys.shape[0] < 2:
        return Tensor(np.zeros((), dtype=polys.dtype))
    violation = (polys[:-1] - polys[1:]).relu()
    return (violation * violation).sum()


def curved_cell_rect(grid: CurvedGrid, r: int, c: int, rowspan: int = 1, colspan: int = 1) -> CellRect:
    """Caja envolvente alineada a los ejes de la región curva de la celda"""
    return CellRect(r=r, c=c,
                    x0=float(grid.col_poly[c].min()), y0=float(grid.row_poly[r].min()),
                    x1=float(grid.col_poly[c + colspan].max()), y1=float(grid.row_poly[r + rowspan].max()))


def resample(poly: np.ndarray, K: int) -> np.ndarray:
    """Remuestrear polilíneas [n, K'] a K puntos por interpolación lineal"""
    poly = np.asarray(poly, dtype=np.float64)
    if poly.shape[-1] == K:
        return poly
    return poly @ interpolation_matrix(poly.shape[-1], K).T


class CurvedHead(Module):
    """Residuos por frontera y punto: filas desde las características de columna y viceversa"""

    def __init__(self, config: CurvedConfig, caps: Caps, d_seq: int, rng: Rng):
        super().__init__()
        self.config = config
        self.caps = caps
        self.params["row.w"] = init_weight(rng, (caps.R_max + 1, d_seq), d_seq)
        self.params["row.b"] = zeros((caps.R_max + 1,))
        self.params["col.w"] = init_weight(rng, (caps.C_max + 1, d_seq), d_seq)
        self.params["col.b"] = zeros((caps.C_max + 1,))

    def offsets(self, sr_enc: Tensor, sc_enc: Tensor) -> Tuple[Tensor, Tensor]:
        """(offsets de filas [R_max+1, K], offsets de columnas [C_max+1, K])"""
        K = self.config.K
        along_x = sc_enc @ ensure_tensor(interpolation_matrix(sc_enc.shape[1], K).T.astype(sc_enc.dtype))
        along_y = sr_enc @ ensure_tensor(interpolation_matrix(sr_enc.shape[1], K).T.astype(sr_enc.dtype))
        rows = linear(along_x.transpose(), self.params["row.w"], self.params["row.b"]).transpose()
        cols = linear(along_y.transpose(), self.params["col.w"], self.params["col.b"]).transpose()
        return rows, cols
