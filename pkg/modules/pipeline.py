"""
Modelo FastTab completo e inferencia de extremo a extremo con tiempos por etapa
"""

import contextlib
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.config import FastTabConfig
from models.grid import CellRect, CurvedGrid, GridSpec, SpanGrid
from models.structure import TableStructure
from .axial_lines import LinesHead, LinesOutput, decode_boundaries, decode_counts
from .curved import CurvedHead, curved_cell_rect, decode_curved
from .encoder import FeatureMap, ImageEncoder
from .errors import ConfigurationError, StageError
from .grid_span import SpanHead, decode_spans, grid_cells, resolve_spans, roi_align_cells
from .numerics import Module, Rng, Tensor, no_grad
from .structure import build_structure, to_html
from .trm import TinyRecursiveModule, global_pool

logger = logging.getLogger(__name__)

STAGES = ("transfer", "encode", "global_pool", "trm", "axial", "counts", "intervals",
          "boundaries", "curved", "roi", "span", "resolve", "structure", "html")


@dataclass
class BackboneOutput:
    """Activaciones compartidas entre inferencia y entrenamiento"""

    feature_map: FeatureMap
    g: Tensor
    z: Tensor
    lines: LinesOutput


class FastTabModel(Module):
    """Encoder, TRM, cabezal de líneas, cabezal de spans y cabezal curvo"""

    def __init__(self, config: FastTabConfig, rng: Optional[Rng] = None):
        super().__init__()
        self.config = config
        rng = rng or Rng(config.seed)
        d_model = config.d_model
        self.encoder = ImageEncoder(config.encoder, rng.spawn("encoder"))
        self.trm = TinyRecursiveModule(config.trm, d_model, rng.spawn("trm"))
        self.lines = LinesHead(config.axial, config.caps, d_model, config.trm.d_z, rng.spawn("lines"))
        self.span = SpanHead(config.span, config.caps, d_model, rng.spawn("span"))
        self.curved = CurvedHead(config.curved, config.caps, config.axial.d_seq, rng.spawn("curved"))
        self.children = {"encoder": self.encoder, "trm": self.trm, "lines": self.lines,
                         "span": self.span, "curved": self.curved}
        if config.dtype != "float64":
            self.astype(np.dtype(config.dtype))

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)

    def backbone(self, image, training: bool = False, rng: Optional[Rng] = None,
                 T: Optional[int] = None) -> BackboneOutput:
        feature_map = self.encoder.encode(image)
        g = global_pool(feature_map)
        z = self.trm.refine(g, T)
        lines = self.lines.forward(feature_map, z, training, rng)
        return BackboneOutput(feature_map=feature_map, g=g, z=z, lines=lines)

    def pool_cells(self, feature_map: FeatureMap, rects: Sequence[CellRect]) -> Tensor:
        """ROI Align 1×1 de cada rect: [n, d_model]"""
        return roi_align_cells(feature_map, rects, self.config.span.roi_samples)

    def span_logits(self, U: Tensor, R: int, C: int, training: bool = False,
                    rng: Optional[Rng] = None) -> Tuple[Tensor, Tensor]:
        """Logits [R, C, RS_max] y [R, C, CS_max] a partir de U [R·C, d_model] (orden por filas)"""
        rs_logits, cs_logits = self.span.forward(U, training, rng)
        return (rs_logits.reshape(R, C, self.config.caps.RS_max),
                cs_logits.reshape(R, C, self.config.caps.CS_max))


def cell_rects(grid: GridSpec, curved: Optional[CurvedGrid] = None) -> List[CellRect]:
    """Rects de todas las posiciones en orden por filas (curvas si hay polilíneas)"""
    if curved is None:
        return [rect for row in grid_cells(grid) for rect in row]
    return [curved_cell_rect(curved, r, c) for r in range(grid.R) for c in range(grid.C)]


@dataclass
class InferenceResult:
    """Estructura, HTML, rejilla decodificada y tiempos por etapa (µs)"""

    structure: TableStructure
    html: str
    grid: GridSpec
    spans: SpanGrid
    curved: Optional[CurvedGrid] = None
    timings: Dict[str, float] = field(default_factory=dict)
    latency_us: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "html": self.html,
            "structure": self.structure.to_dict(),
            "grid": self.grid.to_dict(),
            "curved": self.curved.to_dict() if self.curved is not None else None,
            "timings_us": dict(self.timings),
            "latency_us": self.latency_us,
        }


class _Stopwatch:
    def __init__(self):
        self.timings: Dict[str, float] = {}

    @contextlib.contextmanager
    def stage(self, name: str):
        start = time.perf_counter_ns()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + (time.perf_counter_ns() - start) / 1000.0


def infer(model: FastTabModel, image, curved: bool = False, head_variant: Optional[str] = None,
          trm_steps: Optional[int] = None) -> InferenceResult:
    """Imagen (3, H, W) en [0, 1] → estructura y HTML, sin dropout y sin gradientes"""
    if head_variant is not None and head_variant != model.config.axial.head_variant:
        raise ConfigurationError(
            f"el modelo usa la variante '{model.config.axial.head_variant}', no '{head_variant}'")
    watch = _Stopwatch()
    start = time.perf_counter_ns()
    with no_grad():
        with watch.stage("transfer"):
            x = Tensor(np.asarray(image, dtype=model.dtype))
        with watch.stage("encode"):
            feature_map = model.encoder.encode(x)
        with watch.stage("global_pool"):
            g = global_pool(feature_map)
        with watch.stage("trm"):
            z = model.trm.refine(g, trm_steps)
        with watch.stage("axial"):
            sr_enc, sc_enc = model.lines.encode_axes(feature_map)
        with watch.stage("counts"):
            logits_R, logits_C, logits_H = model.lines.predict_counts(
                z, sr_enc.mean(axis=1), sc_enc.mean(axis=1))
            R, C, H_hdr = decode_counts(logits_R, logits_C, logits_H)
        with watch.stage("intervals"):
            o_row = model.lines.interval_logits(sr_enc, "row")
            o_col = model.lines.interval_logits(sc_enc, "col")
        with watch.stage("boundaries"):
            grid = GridSpec(R=R, C=C, H_hdr=H_hdr,
                            y=decode_boundaries(o_row, R).data, x=decode_boundaries(o_col, C).data)
        curved_grid = None
        if curved:
            with watch.stage("curved"):
                row_off, col_off = model.curved.offsets(sr_enc, sc_enc)
                curved_grid = decode_curved(grid, row_off, col_off, model.config.curved.bound)
        with watch.stage("roi"):
            rects = cell_rects(grid, curved_grid)
            U = model.pool_cells(feature_map, rects)
        with watch.stage("span"):
            rs_logits, cs_logits = model.span_logits(U, R, C)
            rs_pred, cs_pred = decode_spans(rs_logits, cs_logits)
        with watch.stage("resolve"):
            spans = resolve_spans(rs_pred, cs_pred, R, C)
        with watch.stage("structure"):
            structure = build_structure(grid, spans)
        with watch.stage("html"):
            html = to_html(structure)
    latency = (time.perf_counter_ns() - start) / 1000.0
    logger.debug(f"inferencia {R}x{C} en {latency:.0f} µs: "
                 + ", ".join(f"{k}={v:.0f}" for k, v in watch.timings.items()))
    return InferenceResult(structure=structure, html=html, grid=grid, spans=spans, curved=curved_grid,
                           timings=watch.timings, latency_us=latency)
