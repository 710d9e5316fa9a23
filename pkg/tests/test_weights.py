"""
Tests para el archivo de pesos
"""

import json

import numpy as np
import pytest

from models.config import FastTabConfig
from modules.errors import DatasetError
from modules.numerics import Rng
from modules.pipeline import FastTabModel, infer
from modules.weights import FORMAT_VERSION, load_model, read_weights, save_weights


class TestWeightsFile:
    """Manifiesto JSON + blob little-endian"""

    def test_round_trip_is_bit_exact(self, toy_model, tmp_path):
        path = save_weights(toy_model, tmp_path / "toy.weights")
        loaded = load_model(path)
        original = toy_model.named_parameters()
        restored = loaded.named_parameters()
        assert list(original) == list(restored)
        for name in original:
            assert original[name].data.tobytes() == restored[name].data.tobytes()
        assert loaded.config == toy_model.config

    def test_loaded_model_predicts_the_same(self, toy_model, synth_sample, tmp_path):
        loaded = load_model(save_weights(toy_model, tmp_path / "toy.weights"))
        assert infer(loaded, synth_sample.image).html == infer(toy_model, synth_sample.image).html

    def test_float32_round_trip(self, tmp_path):
        config = FastTabConfig.toy()
        config.dtype = "float32"
        model = FastTabModel(config, Rng(2))
        manifest, arrays = read_weights(save_weights(model, tmp_path / "f32.weights"))
        assert {entry["dtype"] for entry in manifest["tensors"]} == {"float32"}
        assert all(a.dtype == np.float32 for a in arrays.values())

    def test_manifest_layout(self, toy_model, tmp_path):
        path = save_weights(toy_model, tmp_path / "toy.weights")
        header = path.read_bytes().split(b"\n", 1)[0]
        manifest = json.loads(header)
        assert manifest["format_version"] == FORMAT_VERSION
        offsets = [entry["offset"] for entry in manifest["tensors"]]
        assert offsets[0] == 0 and offsets == sorted(offsets)

    def test_truncated_blob(self, toy_model, tmp_path):
        path = save_weights(toy_model, tmp_path / "toy.weights")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DatasetError):
            read_weights(path)

    def test_trailing_bytes(self, toy_model, tmp_path):
        path = save_weights(toy_model, tmp_path / "toy.weights")
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DatasetError):
            read_weights(path)

    def test_wrong_version(self, toy_model, tmp_path):
        path = save_weights(toy_model, tmp_path / "toy.weights")
        header, blob = path.read_bytes().split(b"\n", 1)
        manifest = json.loads(header)
        manifest["format_version"] = FORMAT_VERSION + 1
        path.write_bytes(json.dumps(manifest).encode() + b"\n" + blob)
        with pytest.raises(DatasetError):
            read_weights(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_model(tmp_path / "nada.weights")
