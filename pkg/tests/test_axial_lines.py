"""
Tests para el cabezal de líneas y el decodificador de fronteras
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.config import HEAD_VARIANTS, AxialConfig, Caps, FastTabConfig
from modules.axial_lines import LinesHead, axial_sequences, decode_boundaries, decode_counts
from modules.encoder import FeatureMap
from modules.errors import ConfigurationError
from modules.numerics import Rng, Tensor, parameter


def _feature_map(d=8, H_f=3, W_f=5, seed=0):
    data = Rng(seed).normal(0.0, 1.0, size=(d, H_f, W_f))
    return FeatureMap(tensor=Tensor(data), height=16 * H_f, width=8 * W_f)


class TestDecodeBoundaries:
    """Softmax, suma acumulada y normalización exacta"""

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=12), st.data())
    @settings(max_examples=200, deadline=None)
    def test_monotone_and_exact_endpoints(self, logits, data):
        count = data.draw(st.integers(1, len(logits) - 1))
        y = decode_boundaries(Tensor(np.array(logits)), count).data
        assert y.shape == (count + 1,)
        assert y[0] == 0.0
        assert y[-1] == 1.0
        assert np.all(np.diff(y) >= 0.0)

    def test_random_vectors_sweep(self):
        """10⁴ vectores aleatorios sin violaciones"""
        rng = Rng(99)
        for _ in range(10_000):
            length = rng.integers(2, 20)
            logits = rng.normal(0.0, 5.0, size=length)
            count = rng.integers(1, length)
            y = decode_boundaries(Tensor(logits), count).data
            assert y[0] == 0.0 and y[-1] == 1.0 and np.all(np.diff(y) >= 0.0)

    def test_uniform_logits_give_uniform_grid(self):
        y = decode_boundaries(Tensor(np.zeros(6)), 4).data
        assert np.allclose(y, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_closed_form_softmax(self):
        y = decode_boundaries(Tensor(np.array([np.log(2.0), 0.0, 0.0, 0.0])), 3).data
        assert np.allclose(y, [0.0, 0.5, 0.75, 1.0])

    def test_count_out_of_range(self):
        with pytest.raises(ConfigurationError):
            decode_boundaries(Tensor(np.zeros(5)), 5)
        with pytest.raises(ConfigurationError):
            decode_boundaries(Tensor(np.zeros(5)), 0)

    def test_gradient_flows_to_logits(self):
        logits = parameter(np.array([0.1, 0.5, -0.3, 0.0]))
        decode_boundaries(logits, 3)[1].backward()
        assert np.any(logits.grad[:3] != 0.0)
        assert logits.grad[3] == 0.0


class TestDecodeCounts:
    """argmax con desempate al índice menor"""

    def test_zero_logits_give_one_by_one(self):
        R, C, H = decode_counts(Tensor(np.zeros(4)), Tensor(np.zeros(4)), Tensor(np.zeros(5)))
        assert (R, C, H) == (1, 1, 0)

    def test_header_clamped_to_rows(self):
        R, C, H = decode_counts(Tensor(np.array([0.0, 5.0, 0.0])), Tensor(np.array([1.0, 0.0])),
                                Tensor(np.array([0.0, 0.0, 0.0, 9.0])))
        assert (R, C, H) == (2, 1, 2)


class TestLinesHead:
    """Formas de salida para las cuatro variantes"""

    @pytest.mark.parametrize("variant", HEAD_VARIANTS)
    def test_output_shapes(self, variant):
        caps = Caps(R_max=4, C_max=5, RS_max=2, CS_max=2)
        config = AxialConfig(d_seq=8, heads=2, d_ff=16, dropout=0.0, head_variant=variant, max_len=16,
                             mlp_hidden=8, twod_blocks=2)
        head = LinesHead(config, caps, d_model=8, d_z=6, rng=Rng(0))
        out = head.forward(_feature_map(), Tensor(np.zeros(6)))
        assert out.sr_enc.shape == (8, 3)
        assert out.sc_enc.shape == (8, 5)
        assert out.logits_R.shape == (4,)
        assert out.logits_C.shape == (5,)
        assert out.logits_H.shape == (5,)
        assert out.o_row.shape == (5,)
        assert out.o_col.shape == (6,)

    def test_axial_sequences_are_means(self):
        fm = _feature_map()
        S_r, S_c = axial_sequences(fm)
        assert np.allclose(S_r.data, fm.tensor.data.mean(axis=2))
        assert np.allclose(S_c.data, fm.tensor.data.mean(axis=1))

    def test_positions_interpolated_beyond_max_len(self):
        config = AxialConfig(d_seq=8, heads=2, d_ff=16, dropout=0.0, head_variant="mlp", max_len=4)
        head = LinesHead(config, Caps(), d_model=8, d_z=4, rng=Rng(0))
        out = head.axial_encode(Tensor(np.zeros((8, 10))), "row")
        assert out.shape == (8, 10)

    def test_conv1d_width_in_full_preset(self):
        """El conv1d del preset completo trabaja con 256 canales ocultos"""
        config = FastTabConfig.full().axial.model_copy(update={"head_variant": "conv1d"})
        head = LinesHead(config, Caps(), d_model=8, d_z=4, rng=Rng(0))
        for axis in ("row", "col"):
            for layer in range(config.layers):
                assert head.params[f"{axis}.conv{layer}.w"].shape == (256, 256, 3)

    def test_twod_rejects_axial_encode(self):
        config = AxialConfig(d_seq=8, heads=2, head_variant="twod")
        head = LinesHead(config, Caps(), d_model=8, d_z=4, rng=Rng(0))
        with pytest.raises(ConfigurationError):
            head.axial_encode(Tensor(np.zeros((8, 3))), "row")
