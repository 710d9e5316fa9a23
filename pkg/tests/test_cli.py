"""
Tests para la línea de comandos
"""

import json

import pytest

import main
from modules.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE
from modules.numerics import Rng
from modules.pipeline import FastTabModel
from modules.structure import parse_html_structure, to_html
from modules.weights import save_weights


@pytest.fixture
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    assert main.run(["synth", "--n", "3", "--caps", "3,3,2,2", "--out", str(out), "--seed", "7"]) == EXIT_OK
    return out


@pytest.fixture
def weights_path(tmp_path, toy_config):
    return save_weights(FastTabModel(toy_config, Rng(0)), tmp_path / "toy.weights")


class TestSynth:
    """Generación reproducible del dataset"""

    def test_byte_identical_runs(self, dataset_dir, tmp_path):
        other = tmp_path / "again"
        assert main.run(["synth", "--n", "3", "--caps", "3,3,2,2", "--out", str(other), "--seed", "7"]) == EXIT_OK
        assert (other / "index.jsonl").read_bytes() == (dataset_dir / "index.jsonl").read_bytes()
        for image in (dataset_dir / "images").iterdir():
            assert (other / "images" / image.name).read_bytes() == image.read_bytes()

    def test_bad_caps(self, tmp_path):
        assert main.run(["synth", "--n", "1", "--caps", "x", "--out", str(tmp_path / "d")]) == EXIT_DATA


class TestEval:
    """Evaluación desde un directorio de predicciones"""

    def test_ground_truth_scores_one(self, dataset_dir, tmp_path):
        from modules.data import load_dataset

        pred_dir = tmp_path / "pred"
        pred_dir.mkdir()
        for sample in load_dataset(dataset_dir):
            (pred_dir / f"{sample.id}.html").write_text(to_html(main.gt_structure(sample)), encoding="utf-8")
        report_path = tmp_path / "report.json"
        code = main.run(["eval", "--gt", str(dataset_dir), "--pred-dir", str(pred_dir), "--metric", "all",
                         "--report", str(report_path)])
        assert code == EXIT_OK
        aggregate = json.loads(report_path.read_text(encoding="utf-8"))["aggregate"]["overall"]
        assert aggregate["steds"] == 1.0
        assert aggregate["grits"] == pytest.approx(1.0)
        assert aggregate["car_f1"] == 1.0

    def test_missing_prediction(self, dataset_dir, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main.run(["eval", "--gt", str(dataset_dir), "--pred-dir", str(tmp_path / "empty")]) == EXIT_DATA

    def test_requires_source(self, dataset_dir):
        assert main.run(["eval", "--gt", str(dataset_dir)]) == EXIT_USAGE

    def test_model_evaluation(self, dataset_dir, weights_path, tmp_path):
        report_path = tmp_path / "model.json"
        assert main.run(["eval", "--gt", str(dataset_dir), "--model", str(weights_path),
                         "--report", str(report_path)]) == EXIT_OK
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert len(report["samples"]) == 3
        latency = report["extra"]["latency"]
        assert 0.0 <= latency["p50_ms"] <= latency["p95_ms"]

    def test_prediction_dir_has_no_latency(self, dataset_dir, tmp_path):
        from modules.data import load_dataset

        pred_dir = tmp_path / "pred"
        pred_dir.mkdir()
        for sample in load_dataset(dataset_dir):
            (pred_dir / f"{sample.id}.html").write_text(to_html(main.gt_structure(sample)), encoding="utf-8")
        report_path = tmp_path / "report.json"
        assert main.run(["eval", "--gt", str(dataset_dir), "--pred-dir", str(pred_dir),
                         "--report", str(report_path)]) == EXIT_OK
        assert "latency" not in json.loads(report_path.read_text(encoding="utf-8"))["extra"]

    def test_failed_inference_is_logged(self, dataset_dir, weights_path, monkeypatch, caplog):
        """Un fallo de inferencia se registra por trabajo y se propaga"""
        from modules import pipeline
        from modules.data import load_dataset
        from modules.weights import load_model

        def broken(*args, **kwargs):
            raise RuntimeError("imagen corrupta")

        monkeypatch.setattr(pipeline, "infer", broken)
        with caplog.at_level("ERROR", logger="fasttab"):
            with pytest.raises(RuntimeError):
                main.predict(load_model(weights_path), load_dataset(dataset_dir)[:1])
        assert any("Inferencia fallida" in r.getMessage() and "imagen corrupta" in r.getMessage()
                   for r in caplog.records)


class TestTrainToy:
    """Entrenamiento corto desde la línea de comandos"""

    def test_writes_history(self, dataset_dir, tmp_path):
        from models.history import TrainingHistory

        out = tmp_path / "toy.weights"
        assert main.run(["train-toy", "--config", "toy", "--data", str(dataset_dir), "--out", str(out),
                         "--epochs", "1", "--seed", "3"]) == EXIT_OK
        assert out.exists()
        data = json.loads((tmp_path / "toy.weights.history.json").read_text(encoding="utf-8"))
        history = TrainingHistory.from_dict(data)
        assert history.status == "completed" and history.seed == 3
        assert len(history.loss_log()) == 1


class TestInfer:
    """Inferencia sobre una imagen del dataset"""

    def test_writes_html(self, dataset_dir, weights_path, tmp_path):
        image = sorted((dataset_dir / "images").iterdir())[0]
        out = tmp_path / "pred.html"
        assert main.run(["infer", "--model", str(weights_path), "--image", str(image), "--out", str(out)]) == EXIT_OK
        parse_html_structure(out.read_text(encoding="utf-8"))

    def test_missing_image(self, weights_path, tmp_path):
        code = main.run(["infer", "--model", str(weights_path), "--image", str(tmp_path / "no.ppm")])
        assert code == EXIT_DATA


class TestUsage:
    """Errores de uso con código 2"""

    def test_unknown_command(self):
        assert main.run(["bogus"]) == EXIT_USAGE

    def test_missing_required_argument(self):
        assert main.run(["synth"]) == EXIT_USAGE

    def test_bad_head_variant(self, weights_path):
        assert main.run(["infer", "--model", str(weights_path), "--image", "x.ppm", "--head", "lstm"]) == EXIT_USAGE

    def test_bench_repeat_must_be_positive(self, dataset_dir, weights_path):
        assert main.run(["bench", "--model", str(weights_path), "--data", str(dataset_dir),
                         "--repeat", "0"]) == EXIT_USAGE

    def test_gradcheck_config_must_exist(self):
        assert main.run(["gradcheck", "--config", "/no/such/config.json"]) == EXIT_USAGE
