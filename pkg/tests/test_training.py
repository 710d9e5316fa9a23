"""
Tests para la pérdida, el teacher forcing, AdamW y el bucle de entrenamiento
"""

import math

import numpy as np
import pytest

from models.config import Caps, FastTabConfig, OptimizerConfig, TeacherForcingSchedule
from models.grid import GridSpec, SpanGrid
from modules.errors import DatasetError
from modules.numerics import Rng, Tensor, parameter
from modules.pipeline import FastTabModel
from modules.training import (AdamW, Trainer, check_caps, compute_losses, cosine_lr, forward_train,
                              gradcheck_losses, gradcheck_setup, gradcheck_terms, permutation,
                              perturb_boundaries, span_loss, tf_fraction, train_toy)


class TestTeacherForcing:
    """Fracción de teacher forcing y perturbación de fronteras"""

    def test_linear_schedule(self):
        schedule = TeacherForcingSchedule(start_fraction=1.0, end_fraction=0.2, anneal_steps=100)
        assert tf_fraction(0, schedule) == 1.0
        assert tf_fraction(50, schedule) == pytest.approx(0.6)
        assert tf_fraction(100, schedule) == pytest.approx(0.2)
        assert tf_fraction(1000, schedule) == pytest.approx(0.2)

    def test_negative_step(self):
        with pytest.raises(ValueError):
            tf_fraction(-1, TeacherForcingSchedule())

    def test_zero_sigma_is_identity(self):
        grid = GridSpec(R=3, C=2, H_hdr=0, y=np.array([0.0, 0.2, 0.7, 1.0]), x=np.array([0.0, 0.4, 1.0]))
        out = perturb_boundaries(grid, 0.0, Rng(0))
        assert np.array_equal(out.y, grid.y) and np.array_equal(out.x, grid.x)

    def test_perturbation_stays_monotone(self):
        grid = GridSpec.uniform(5, 4)
        rng = Rng(8)
        for _ in range(100):
            out = perturb_boundaries(grid, 0.5, rng).validate()
            assert out.y[0] == 0.0 and out.y[-1] == 1.0
            assert np.all(np.diff(out.y) >= 0.0) and np.all(np.diff(out.x) >= 0.0)


class TestSpanLoss:
    """Entropía cruzada en anclas con pesos"""

    def test_uniform_logits_give_log_classes(self):
        spans = SpanGrid.simple(2, 2)
        loss = span_loss(Tensor(np.zeros((2, 2, 10))), Tensor(np.zeros((2, 2, 10))), spans, 2.0)
        assert loss.item() == pytest.approx(2.0 * math.log(10.0))

    def test_covered_positions_get_no_gradient(self):
        spans = SpanGrid.from_cells(2, 3, [(0, 0, 2, 2), (0, 2, 1, 1), (1, 2, 1, 1)])
        rs = parameter(Rng(0).normal(0.0, 1.0, size=(2, 3, 2)))
        cs = parameter(Rng(1).normal(0.0, 1.0, size=(2, 3, 2)))
        span_loss(rs, cs, spans, 2.0).backward()
        for r, c in [(0, 1), (1, 0), (1, 1)]:
            assert np.all(rs.grad[r, c] == 0.0) and np.all(cs.grad[r, c] == 0.0)
        assert np.any(rs.grad[0, 0] != 0.0)

    def test_upweight_scales_merged_anchor(self):
        spans = SpanGrid.from_cells(2, 2, [(0, 0, 2, 2)])
        logits = Tensor(np.zeros((2, 2, 10)))
        single = span_loss(logits, logits, spans, 1.0).item()
        doubled = span_loss(logits, logits, spans, 2.0).item()
        assert doubled == pytest.approx(2.0 * single)


class TestLosses:
    """Términos de la pérdida sobre una pasada real"""

    def test_straight_terms(self, toy_model, blank_sample):
        outputs = forward_train(toy_model, blank_sample, use_gt=True, training=False)
        total, breakdown, parts = compute_losses(outputs, blank_sample, toy_model.config)
        assert set(parts) == {"loss_counts", "loss_header", "loss_boundaries", "loss_spans"}
        assert breakdown.is_finite()
        assert breakdown.total == pytest.approx(total.item())
        assert breakdown.loss_smooth == 0.0

    def test_curved_terms_present(self, blank_sample):
        config = FastTabConfig.toy()
        config.curved.enabled = True
        model = FastTabModel(config, Rng(0))
        outputs = forward_train(model, blank_sample, use_gt=False, training=False)
        _, _, parts = compute_losses(outputs, blank_sample, config)
        assert {"loss_smooth", "loss_noncross"} <= set(parts)
        assert outputs.row_poly.shape == (3, config.curved.K)

    def test_caps_violation(self, blank_sample):
        with pytest.raises(DatasetError):
            check_caps(blank_sample, Caps(R_max=1, C_max=4))


class TestOptimizer:
    """AdamW y programación coseno"""

    def test_cosine_endpoints(self):
        assert cosine_lr(0, 10, 1.0) == 1.0
        assert cosine_lr(5, 10, 1.0) == pytest.approx(0.5)
        assert cosine_lr(10, 10, 1.0, 0.1) == pytest.approx(0.1)

    def test_zero_lr_leaves_parameters(self):
        w = parameter(np.array([[1.0, -2.0], [0.5, 3.0]]))
        before = w.data.copy()
        optimizer = AdamW({"w": w}, OptimizerConfig(lr=0.0), total_steps=5)
        (w * w).sum().backward()
        optimizer.step()
        assert np.array_equal(w.data, before)

    def test_step_reduces_quadratic(self):
        w = parameter(np.array([2.0, -3.0]))
        optimizer = AdamW({"w": w}, OptimizerConfig(lr=0.1, weight_decay=0.0, grad_clip=None), total_steps=100)
        for _ in range(50):
            optimizer.zero_grad()
            (w * w).sum().backward()
            optimizer.step()
        assert np.all(np.abs(w.data) < 2.0)

    def test_weight_decay_skips_vectors(self):
        b = parameter(np.array([1.0, 1.0]))
        optimizer = AdamW({"b": b}, OptimizerConfig(lr=0.1, weight_decay=0.5), total_steps=1)
        b.grad = np.zeros(2)
        optimizer.step()
        assert np.allclose(b.data, 1.0)

    def test_permutation_is_bijection(self):
        order = permutation(20, Rng(4))
        assert sorted(order) == list(range(20))


class TestTrainer:
    """Bucle determinista sobre datos de juguete"""

    def test_same_seed_same_losses(self, blank_sample, synth_sample):
        config = FastTabConfig.toy()
        dataset = [blank_sample, synth_sample]
        _, first = train_toy(config, dataset, epochs=1, seed=5)
        _, second = train_toy(config, dataset, epochs=1, seed=5)
        assert first.status == "completed"
        assert first.loss_log() == second.loss_log()
        assert first.steps == 2

    def test_empty_dataset(self):
        with pytest.raises(DatasetError):
            Trainer(FastTabConfig.toy()).train([], epochs=1)

    def test_oversized_sample_rejected(self, blank_sample):
        config = FastTabConfig.toy()
        config.caps.R_max = 1
        with pytest.raises(DatasetError):
            Trainer(config).train([blank_sample], epochs=1)


class TestGradCheck:
    """Gradientes analíticos frente a diferencias centrales"""

    def test_reports_for_every_term(self):
        reports = gradcheck_losses(seed=0, max_coords=1)
        assert set(reports) == {"loss_counts", "loss_header", "loss_boundaries", "loss_spans",
                                "loss_smooth", "loss_noncross", "loss_curved"}
        failed = {term: r.worst_parameter for term, r in reports.items() if not r.passed}
        assert not failed
        assert reports["loss_noncross"].worst_parameter != ""

    def test_check_point_has_crossing_polylines(self):
        """El punto de verificación cruza polilíneas: la penalización de no cruce y su gradiente no son nulos"""
        model, sample, config = gradcheck_setup(seed=0)
        assert config.curved.bound == 2.0
        terms = gradcheck_terms(model, sample, config)
        assert terms["loss_noncross"].item() > 0.0
        model.zero_grad()
        terms["loss_noncross"].backward()
        assert np.abs(model.curved.params["row.b"].grad).max() > 0.0

    @pytest.mark.slow
    def test_default_coordinates(self):
        assert all(r.passed for r in gradcheck_losses(seed=1).values())


class TestOverfit:
    """Sobreajuste sobre tablas sintéticas pequeñas"""

    @pytest.mark.slow
    def test_small_config_memorises_training_set(self):
        from models.config import Caps
        from modules.data import generate_dataset
        from modules.metrics import s_teds
        from modules.pipeline import infer
        from modules.structure import build_structure

        dataset = generate_dataset(50, seed=0, caps=Caps(R_max=6, C_max=6, RS_max=2, CS_max=2))
        model, history = train_toy(FastTabConfig.small(), dataset, epochs=60, seed=0)
        scores = [s_teds(infer(model, s.image).structure, build_structure(s.grid, s.spans)) for s in dataset]
        assert history.status == "completed"
        assert float(np.mean(scores)) >= 0.95
