"""
Generador de rejilla, ROI Align 1×1, cabezal de spans y resolución de conflictos
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.config import Caps, SpanConfig
from models.grid import CellRect, GridSpec, SpanGrid
from .encoder import FeatureMap
from .numerics import Module, Rng, Tensor, dropout, ensure_tensor, gelu, init_weight, linear, zeros

logger = logging.getLogger(__name__)


def grid_cells(grid: GridSpec) -> List[List[CellRect]]:
    """Rectángulo [x_c, x_{c+1}] × [y_r, y_{r+1}] de cada celda"""
    return [[CellRect(r=r, c=c, x0=float(grid.x[c]), y0=float(grid.y[r]),
                      x1=float(grid.x[c + 1]), y1=float(grid.y[r + 1]))
             for c in range(grid.C)] for r in range(grid.R)]


def _axis_weights(lo: float, hi: float, extent: float, length: int, samples: int) -> np.ndarray:
    """Pesos bilineales 1D de `samples` puntos interiores de [lo, hi] sobre `length` posiciones"""
    weights = np.zeros(length)
    for i in range(samples):
        u = lo + (i + 0.5) / samples * (hi - lo)
        pos = min(max(u * extent - 0.5, 0.0), length - 1.0)
        low = int(np.floor(pos))
        high = min(low + 1, length - 1)
        frac = pos - low
        weights[low] += (1.0 - frac) / samples
        weights[high] += frac / samples
    return weights


def roi_weights(feature_map: FeatureMap, rects: Sequence[CellRect], samples: int = 2) -> np.ndarray:
    """Matriz [n_rects, H_f·W_f] de pesos de muestreo; las rects son constantes"""
    H_f, W_f = feature_map.H_f, feature_map.W_f
    # escala de la extensión sin relleno: u·(H/16) − 0.5
    extent_h = feature_map.height / 16.0
    extent_w = feature_map.width / 8.0
    matrix = np.zeros((len(rects), H_f * W_f))
    for index, rect in enumerate(rects):
        wy = _axis_weights(rect.y0, rect.y1, extent_h, H_f, samples)
        wx = _axis_weights(rect.x0, rect.x1, extent_w, W_f, samples)
        matrix[index] = np.outer(wy, wx).reshape(-1)
    return matrix


def roi_align_cells(feature_map: FeatureMap, rects: Sequence[CellRect], samples: int = 2) -> Tensor:
    """Un vector de d_model por rect: [n_rects, d_model], diferenciable respecto a F"""
    F = feature_map.tensor
    flat = F.reshape(F.shape[0], -1)
    weights = ensure_tensor(roi_weights(feature_map, rects, samples).T.astype(F.dtype))
    return (flat @ weights).transpose()


def roi_align_1x1(feature_map: FeatureMap, rect: CellRect, samples: int = 2) -> Tensor:
    """Muestreo bilineal en S×S puntos interiores de la rect, promediado por canal"""
    return roi_align_cells(feature_map, [rect], samples)[0]


class SpanHead(Module):
    """MLP de tres etapas (GELU tras cada una, dropout tras las dos primeras) y dos clasificadores"""

    def __init__(self, config: SpanConfig, caps: Caps, d_model: int, rng: Rng):
        super().__init__()
        self.config = config
        self.caps = caps
        widths = [d_model] + list(config.hidden)
        for stage in range(3):
            self.params[f"stage{stage}.w"] = init_weight(rng, (widths[stage + 1], widths[stage]), widths[stage])
            self.params[f"stage{stage}.b"] = zeros((widths[stage + 1],))
        self.params["rs.w"] = init_weight(rng, (caps.RS_max, widths[-1]), widths[-1])
        self.params["rs.b"] = zeros((caps.RS_max,))
        self.params["cs.w"] = init_weight(rng, (caps.CS_max, widths[-1]), widths[-1])
        self.params["cs.b"] = zeros((caps.CS_max,))

    def forward(self, U: Tensor, training: bool = False, rng: Optional[Rng] = None) -> Tuple[Tensor, Tensor]:
        """U [..., d_model] → logits de rowspan [..., RS_max] y colspan [..., CS_max]"""
        shape = U.shape[:-1]
        h = U.reshape(-1, U.shape[-1])
        for stage in range(3):
            h = gelu(linear(h, self.params[f"stage{stage}.w"], self.params[f"stage{stage}.b"]))
            if stage < 2:
                h = dropout(h, self.config.dropout, training, rng)
        rs_logits = linear(h, self.params["rs.w"], self.params["rs.b"])
        cs_logits = linear(h, self.params["cs.w"], self.params["cs.b"])
        return (rs_logits.reshape(*shape, self.caps.RS_max),
                cs_logits.reshape(*shape, self.caps.CS_max))


def decode_spans(rs_logits: Tensor, cs_logits: Tensor) -> Tuple[np.ndarray, np.ndarray]:
    """argmax (índice menor en empate) + 1"""
    return (np.argmax(rs_logits.data, axis=-1) + 1, np.argmax(cs_logits.data, axis=-1) + 1)


def resolve_spans(rs_pred: np.ndarray, cs_pred: np.ndarray, R: int, C: int) -> SpanGrid:
    """Recorrido por filas: cada celda libre es ancla con span recortado al borde y encogido
    (primero cs, luego rs) hasta no tocar celdas ya reclamadas"""
    rs_pred = np.asarray(rs_pred, dtype=np.int64).reshape(R, C)
    cs_pred = np.asarray(cs_pred, dtype=np.int64).reshape(R, C)
    claimed = np.zeros((R, C), dtype=bool)
    rs = np.ones((R, C), dtype=np.int64)
    cs = np.ones((R, C), dtype=np.int64)
    anchor = np.zeros((R, C), dtype=bool)
    shrunk = 0
    for r in range(R):
        for c in range(C):
            if claimed[r, c]:
                continue
            rspan = int(min(max(rs_pred[r, c], 1), R - r))
            cspan = int(min(max(cs_pred[r, c], 1), C - c))
            requested = (rspan, cspan)
            while claimed[r:r + rspan, c:c + cspan].any():
                if cspan > 1:
                    cspan -= 1
                else:
                    rspan -= 1
            if (rspan, cspan) != requested:
                shrunk += 1
            claimed[r:r + rspan, c:c + cspan] = True
            anchor[r, c] = True
            rs[r, c] = rspan
            cs[r, c] = cspan
    if shrunk:
        logger.debug(f"{shrunk} spans encogidos para evitar solapes")
    return SpanGrid(rs=rs, cs=cs, anchor=anchor)
