"""
Tests para datos sintéticos, anonimización, rotación y E/S del dataset
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.config import Caps
from models.grid import CurvedGrid, SpanGrid
from models.sample import AnonymMethod
from modules.data import (SynthStyle, anonymise, generate_dataset, generate_sample, load_dataset, parse_caps,
                          quantize, read_image, render_synthetic, rotate_image, rotate_points, rotate_sample,
                          rotation_matrix, save_dataset, write_image)
from modules.errors import DatasetError, InputError
from modules.numerics import Rng

CAPS = Caps(R_max=4, C_max=4, RS_max=2, CS_max=2)


def _outside_mask(shape, boxes):
    mask = np.ones(shape[1:], dtype=bool)
    for x0, y0, x1, y1 in boxes:
        mask[y0:y1, x0:x1] = False
    return mask


class TestRender:
    """Renderizador de tablas sintéticas"""

    def test_sample_is_valid(self, synth_sample):
        assert synth_sample.id == "synth_00000"
        assert synth_sample.image.dtype == np.float32
        synth_sample.validate()

    def test_same_seed_same_pixels(self):
        a = generate_sample(3, seed=11, caps=CAPS, anonymise_method="random", rotate_alpha=4.0)
        b = generate_sample(3, seed=11, caps=CAPS, anonymise_method="random", rotate_alpha=4.0)
        assert np.array_equal(a.image, b.image)
        assert a.text_boxes == b.text_boxes

    def test_dataset_independent_of_workers(self):
        serial = generate_dataset(4, seed=2, caps=CAPS, workers=1)
        parallel = generate_dataset(4, seed=2, caps=CAPS, workers=3)
        assert [s.id for s in serial] == [s.id for s in parallel]
        assert all(np.array_equal(a.image, b.image) for a, b in zip(serial, parallel))

    def test_boundaries_match_pixel_edges(self):
        sample = render_synthetic(2, 3, SpanGrid.simple(2, 3), 1, SynthStyle(), Rng(0))
        assert sample.grid.y[0] == 0.0 and sample.grid.y[-1] == 1.0
        assert np.all(np.diff(sample.grid.x) > 0)
        # banda de cabecera sombreada
        header_rows = int(round(sample.grid.y[1] * sample.height))
        assert sample.image[0, 1:header_rows - 1, sample.width // 2].max() <= 0.86

    def test_rejects_mismatched_spans(self):
        with pytest.raises(DatasetError):
            render_synthetic(2, 2, SpanGrid.simple(3, 2), 0, SynthStyle(), Rng(0))

    def test_parse_caps(self):
        assert parse_caps("3,4,2,2") == Caps(R_max=3, C_max=4, RS_max=2, CS_max=2)
        assert parse_caps("pubtabnet").R_max >= 1
        with pytest.raises(DatasetError):
            parse_caps("3,4")


class TestAnonymise:
    """Seis métodos, nunca tocan píxeles fuera de las cajas"""

    @pytest.mark.parametrize("method", list(AnonymMethod))
    def test_outside_pixels_unchanged(self, method, synth_sample):
        out = anonymise(synth_sample.image, synth_sample.text_boxes, method, Rng(0))
        mask = _outside_mask(synth_sample.image.shape, synth_sample.text_boxes)
        assert np.array_equal(out[:, mask], synth_sample.image[:, mask])
        assert out.dtype == synth_sample.image.dtype

    @given(st.integers(0, 10_000), st.sampled_from(list(AnonymMethod)))
    @settings(max_examples=60, deadline=None)
    def test_outside_pixels_unchanged_random_boxes(self, seed, method):
        rng = Rng(seed)
        image = rng.uniform(0.0, 1.0, size=(3, 24, 30))
        boxes = []
        for _ in range(rng.integers(1, 4)):
            x0, y0 = rng.integers(0, 29), rng.integers(0, 23)
            boxes.append((x0, y0, rng.integers(x0, 31), rng.integers(y0, 25)))
        out = anonymise(image, boxes, method, rng)
        mask = _outside_mask(image.shape, boxes)
        assert np.array_equal(out[:, mask], image[:, mask])

    def test_black_is_zero(self, blank_sample):
        out = anonymise(blank_sample.image, blank_sample.text_boxes, "black")
        for x0, y0, x1, y1 in blank_sample.text_boxes:
            assert np.all(out[:, y0:y1, x0:x1] == 0.0)

    def test_mean_of_checkerboard(self):
        image = np.zeros((3, 8, 8))
        image[:, ::2, ::2] = 1.0
        image[:, 1::2, 1::2] = 1.0
        out = anonymise(image, [(0, 0, 8, 8)], AnonymMethod.MEAN)
        assert np.allclose(out, 0.5)

    def test_median_and_blur_of_constant(self):
        image = np.full((3, 16, 16), 0.3, dtype=np.float32)
        for method in ("median", "gaussian_blur", "pixelation"):
            out = anonymise(image, [(2, 2, 14, 14)], method)
            assert np.allclose(out, 0.3, atol=1e-6)

    def test_noise_requires_rng(self, blank_sample):
        with pytest.raises(InputError):
            anonymise(blank_sample.image, blank_sample.text_boxes, "noise")

    def test_noise_is_clipped(self, blank_sample):
        out = anonymise(blank_sample.image, blank_sample.text_boxes, "noise", Rng(1))
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert not np.array_equal(out, blank_sample.image)

    def test_box_outside_image(self, blank_sample):
        with pytest.raises(InputError):
            anonymise(blank_sample.image, [(0, 0, 40, 10)], "black")

    def test_method_names(self):
        assert AnonymMethod.parse("Gaussian blur") is AnonymMethod.GAUSSIAN_BLUR
        assert AnonymMethod.parse("PIXELATION") is AnonymMethod.PIXELATION
        with pytest.raises(ValueError):
            AnonymMethod.parse("sepia")


class TestRotation:
    """Rotación de imagen, puntos y muestras"""

    def test_quarter_turn_matches_rot90(self):
        image = Rng(3).uniform(0.0, 1.0, size=(3, 12, 12)).astype(np.float32)
        rotated, _ = rotate_image(image, 90.0)
        assert rotated.shape == image.shape
        assert np.allclose(rotated, np.rot90(image, k=1, axes=(1, 2)), atol=1e-4)

    def test_corner_vector_follows_rotation(self):
        width, height = 100, 60
        matrix, _, _ = rotation_matrix(5.0, width, height)
        corners = rotate_points(np.array([[0.0, 0.0], [width, 0.0]]), matrix)
        vector = corners[1] - corners[0]
        theta = math.radians(5.0)
        assert np.allclose(vector, [width * math.cos(theta), -width * math.sin(theta)])

    def test_canvas_grows(self):
        _, new_w, new_h = rotation_matrix(30.0, 100, 50)
        assert new_w > 100 and new_h > 50

    def test_zero_alpha_is_identity(self, synth_sample):
        out = rotate_sample(synth_sample, 0.0, Rng(0), K=6)
        assert np.array_equal(out.image, synth_sample.image)
        assert np.allclose(out.curved.row_poly, CurvedGrid.straight(synth_sample.grid, 6).row_poly)

    def test_rotated_sample_is_valid(self, synth_sample):
        out = rotate_sample(synth_sample, 5.0, Rng(9), K=8)
        out.validate()
        assert out.curved.row_poly.shape == (synth_sample.grid.R + 1, 8)
        assert np.all(out.curved.row_poly[0] == 0.0) and np.all(out.curved.row_poly[-1] == 1.0)

    def test_negative_alpha(self, synth_sample):
        with pytest.raises(InputError):
            rotate_sample(synth_sample, -1.0, Rng(0))


class TestDatasetIO:
    """index.jsonl más imágenes PPM"""

    def test_save_and_load(self, tmp_path):
        samples = generate_dataset(3, seed=4, caps=CAPS, rotate_alpha=3.0, K=5)
        save_dataset(samples, tmp_path)
        loaded = load_dataset(tmp_path)
        assert [s.id for s in loaded] == [s.id for s in samples]
        for original, restored in zip(samples, loaded):
            assert np.allclose(restored.image, quantize(original.image), atol=1e-6)
            assert np.allclose(restored.grid.y, original.grid.y)
            assert list(restored.spans.anchors()) == list(original.spans.anchors())
            assert restored.curved.K == 5

    def test_png_round_trip(self, tmp_path, synth_sample):
        path = write_image(tmp_path / "x.png", synth_sample.image)
        assert np.allclose(read_image(path), synth_sample.image, atol=1e-6)

    def test_missing_index(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)

    def test_bad_json_line(self, tmp_path):
        (tmp_path / "index.jsonl").write_text("{no json\n", encoding="utf-8")
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)

    def test_unreadable_image(self, tmp_path):
        (tmp_path / "broken.ppm").write_bytes(b"P6\n")
        with pytest.raises(InputError):
            read_image(tmp_path / "broken.ppm")
