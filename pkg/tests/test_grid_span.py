"""
Tests para la rejilla, ROI Align y la resolución de spans
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.config import Caps, SpanConfig
from models.grid import CellRect, GridSpec
from modules.encoder import FeatureMap
from modules.grid_span import (SpanHead, decode_spans, grid_cells, resolve_spans, roi_align_1x1,
                               roi_align_cells, roi_weights)
from modules.numerics import Rng, Tensor, parameter


def _gradient_map(H_f=4, W_f=6):
    """Mapa de un canal que crece linealmente con x"""
    values = np.tile(np.arange(W_f, dtype=np.float64), (H_f, 1))[None]
    return FeatureMap(tensor=Tensor(values), height=16 * H_f, width=8 * W_f)


class TestGridCells:
    """Rectángulos de celda a partir de las fronteras"""

    def test_uniform_grid(self):
        cells = grid_cells(GridSpec.uniform(2, 4))
        assert len(cells) == 2 and len(cells[0]) == 4
        assert cells[1][3].x0 == 0.75 and cells[1][3].y1 == 1.0
        assert (cells[0][0].x1 - cells[0][0].x0) * (cells[0][0].y1 - cells[0][0].y0) == pytest.approx(0.125)


class TestRoiAlign:
    """Muestreo bilineal 1×1"""

    def test_weights_are_convex(self):
        fm = _gradient_map()
        rects = grid_cells(GridSpec.uniform(3, 3))
        weights = roi_weights(fm, [rect for row in rects for rect in row])
        assert np.all(weights >= 0.0)
        assert np.allclose(weights.sum(axis=1), 1.0)

    def test_linear_gradient_is_reproduced(self):
        """Sobre un gradiente lineal el ROI devuelve el valor en el centro muestreado"""
        fm = _gradient_map(W_f=6)
        value = roi_align_1x1(fm, CellRect(r=0, c=0, x0=0.25, y0=0.0, x1=0.75, y1=1.0)).item()
        # centros de muestra en u=0.375 y 0.625 → posiciones 1.75 y 3.25
        assert value == pytest.approx(2.5)

    def test_value_within_feature_range(self):
        fm = _gradient_map()
        for row in grid_cells(GridSpec.uniform(2, 5)):
            for rect in row:
                v = roi_align_1x1(fm, rect).item()
                assert 0.0 <= v <= 5.0

    def test_gradient_reaches_feature_map(self):
        data = Rng(1).normal(0.0, 1.0, size=(3, 2, 4))
        F = parameter(data)
        fm = FeatureMap(tensor=F, height=32, width=32)
        rects = [rect for row in grid_cells(GridSpec.uniform(2, 2)) for rect in row]
        U = roi_align_cells(fm, rects)
        assert U.shape == (4, 3)
        U.sum().backward()
        # cada celda es una combinación convexa: el gradiente total por canal es el número de celdas
        assert np.allclose(F.grad.sum(axis=(1, 2)), 4.0)


class TestSpanHead:
    """Cabezal de spans"""

    def test_output_shapes(self):
        head = SpanHead(SpanConfig(hidden=[8, 8, 8], dropout=0.0), Caps(RS_max=3, CS_max=4), d_model=5, rng=Rng(0))
        rs, cs = head.forward(Tensor(np.zeros((2, 3, 5))))
        assert rs.shape == (2, 3, 3)
        assert cs.shape == (2, 3, 4)

    def test_decode_spans_tie_break(self):
        rs, cs = decode_spans(Tensor(np.zeros((1, 2, 3))), Tensor(np.array([[[0.0, 2.0], [1.0, 1.0]]])))
        assert rs.tolist() == [[1, 1]]
        assert cs.tolist() == [[2, 1]]


class TestResolveSpans:
    """Resolución de conflictos en orden de filas"""

    def test_simple_predictions_stay_simple(self):
        spans = resolve_spans(np.ones((2, 3)), np.ones((2, 3)), 2, 3)
        assert spans.anchor.all()

    def test_clipped_at_border(self):
        spans = resolve_spans(np.full((2, 2), 5), np.full((2, 2), 5), 2, 2)
        assert list(spans.anchors()) == [(0, 0, 2, 2)]

    def test_conflict_shrinks_colspan_first(self):
        rs = np.array([[1, 2], [1, 1]])
        cs = np.array([[1, 1], [2, 1]])
        spans = resolve_spans(rs, cs, 2, 2)
        # (0,1) reclama (1,1); el ancla (1,0) se encoge a 1×1
        assert list(spans.anchors()) == [(0, 0, 1, 1), (0, 1, 2, 1), (1, 0, 1, 1)]

    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    @settings(max_examples=150, deadline=None)
    def test_always_tiles_exactly(self, R, C, data):
        rs = np.array(data.draw(st.lists(st.integers(1, 4), min_size=R * C, max_size=R * C)))
        cs = np.array(data.draw(st.lists(st.integers(1, 4), min_size=R * C, max_size=R * C)))
        spans = resolve_spans(rs, cs, R, C).validate()
        assert np.all(spans.owner_map() >= 0)
        assert sum(rspan * cspan for _, _, rspan, cspan in spans.anchors()) == R * C
