"""
Entrenamiento: pérdida de cuatro términos, teacher forcing, AdamW y bucle de juguete
"""

import logging
import math
import uuid
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.config import Caps, FastTabConfig, OptimizerConfig, TeacherForcingSchedule
from models.grid import CurvedGrid, GridSpec, SpanGrid
from models.history import LossBreakdown, TrainingHistory
from models.sample import Sample
from .axial_lines import LinesOutput, decode_boundaries
from .curved import curved_polylines, default_bound, non_crossing_penalty, resample, smoothness_penalty
from .errors import DatasetError, NumericError
from .numerics import GradCheckReport, Rng, Tensor, cross_entropy, grad_check, log_softmax
from .pipeline import FastTabModel, cell_rects

logger = logging.getLogger(__name__)


def tf_fraction(step: int, schedule: TeacherForcingSchedule) -> float:
    """Interpolación lineal de start_fraction a end_fraction en anneal_steps pasos"""
    if step < 0:
        raise ValueError(f"step debe ser >= 0, recibido {step}")
    if schedule.anneal_steps == 0 or step >= schedule.anneal_steps:
        return schedule.end_fraction
    progress = step / schedule.anneal_steps
    return schedule.start_fraction + (schedule.end_fraction - schedule.start_fraction) * progress


def _jitter_axis(values: np.ndarray, sigma: float, rng: Rng) -> np.ndarray:
    out = values.copy()
    count = len(values) - 1
    for i in range(1, count):
        # cada frontera queda entre los puntos medios con sus vecinas originales
        low = (values[i - 1] + values[i]) / 2.0
        high = (values[i] + values[i + 1]) / 2.0
        out[i] = float(np.clip(values[i] + rng.normal(0.0, sigma), low, high))
    return out


def perturb_boundaries(grid: GridSpec, sigma: float, rng: Rng) -> GridSpec:
    """Ruido gaussiano recortado en las fronteras interiores; extremos intactos"""
    if sigma < 0:
        raise ValueError(f"sigma debe ser >= 0, recibido {sigma}")
    if sigma == 0:
        return grid.copy()
    return GridSpec(R=grid.R, C=grid.C, H_hdr=grid.H_hdr,
                    y=_jitter_axis(grid.y, sigma, rng), x=_jitter_axis(grid.x, sigma, rng))


def check_caps(sample: Sample, caps: Caps) -> Sample:
    if sample.grid.R > caps.R_max or sample.grid.C > caps.C_max:
        raise DatasetError(f"muestra {sample.id}: {sample.grid.R}x{sample.grid.C} supera los topes "
                           f"{caps.R_max}x{caps.C_max}")
    try:
        sample.spans.validate(caps.RS_max, caps.CS_max)
    except DatasetError as e:
        raise DatasetError(f"muestra {sample.id}: {e}") from e
    return sample


@dataclass
class TrainOutputs:
    """Salidas diferenciables de una pasada de entrenamiento"""

    lines: LinesOutput
    pred_y: Tensor
    pred_x: Tensor
    rs_logits: Tensor
    cs_logits: Tensor
    row_poly: Optional[Tensor] = None
    col_poly: Optional[Tensor] = None
    used_gt: bool = True


def forward_train(model: FastTabModel, sample: Sample, use_gt: bool, rng: Optional[Rng] = None,
                  training: bool = True) -> TrainOutputs:
    """Pasada completa con las ROI construidas desde separadores GT (perturbados) o predichos"""
    config = model.config
    grid = sample.grid
    backbone = model.backbone(Tensor(sample.image.astype(model.dtype)), training,
                              rng.spawn("dropout") if rng is not None else None)
    lines = backbone.lines
    pred_y = decode_boundaries(lines.o_row, grid.R)
    pred_x = decode_boundaries(lines.o_col, grid.C)

    row_poly = col_poly = None
    if config.curved.enabled:
        row_off, col_off = model.curved.offsets(lines.sr_enc, lines.sc_enc)
        bound = config.curved.bound or min(default_bound(grid.y), default_bound(grid.x))
        row_poly = curved_polylines(pred_y, row_off[:grid.R + 1], bound)
        col_poly = curved_polylines(pred_x, col_off[:grid.C + 1], bound)

    if use_gt:
        sigma = config.schedule.perturb_sigma
        roi_grid = perturb_boundaries(grid, sigma, rng) if rng is not None else grid.copy()
        roi_curved = sample.curved if (config.curved.enabled and sample.curved is not None) else None
    else:
        roi_grid = GridSpec(R=grid.R, C=grid.C, H_hdr=grid.H_hdr, y=pred_y.data.astype(np.float64),
                            x=pred_x.data.astype(np.float64))
        roi_curved = None
        if row_poly is not None:
            roi_curved = CurvedGrid(base=roi_grid, K=config.curved.K, row_poly=row_poly.data,
                                    col_poly=col_poly.data)
    U = model.pool_cells(backbone.feature_map, cell_rects(roi_grid, roi_curved))
    rs_logits, cs_logits = model.span_logits(U, grid.R, grid.C, training,
                                             rng.spawn("span") if rng is not None else None)
    return TrainOutputs(lines=lines, pred_y=pred_y, pred_x=pred_x, rs_logits=rs_logits,
                        cs_logits=cs_logits, row_poly=row_poly, col_poly=col_poly, used_gt=use_gt)


def _interior_mse(pred: Tensor, target: np.ndarray) -> Optional[Tensor]:
    """MSE sobre las fronteras interiores (filas 1..count-1); los extremos son fijos"""
    count = pred.shape[0] - 1
    if count < 2:
        return None
    diff = pred[1:count] - Tensor(np.asarray(target[1:count], dtype=pred.dtype))
    return (diff * diff).mean()


def _zero(dtype) -> Tensor:
    return Tensor(np.zeros((), dtype=dtype))


def span_loss(rs_logits: Tensor, cs_logits: Tensor, spans: SpanGrid, anchor_upweight: float) -> Tensor:
    """Entropía cruzada solo en anclas, promediada; las anclas fusionadas pesan anchor_upweight"""
    anchors = list(spans.anchors())
    if not anchors:
        return _zero(rs_logits.dtype)
    rows = np.array([a[0] for a in anchors])
    cols = np.array([a[1] for a in anchors])
    rs_target = np.array([a[2] - 1 for a in anchors])
    cs_target = np.array([a[3] - 1 for a in anchors])
    weights = np.array([anchor_upweight if (a[2] > 1 or a[3] > 1) else 1.0 for a in anchors])
    index = np.arange(len(anchors))
    rs_nll = -log_softmax(rs_logits[rows, cols], axis=-1)[index, rs_target]
    cs_nll = -log_softmax(cs_logits[rows, cols], axis=-1)[index, cs_target]
    weighted = (rs_nll + cs_nll) * Tensor(weights.astype(rs_logits.dtype))
    return weighted.sum() * (1.0 / len(anchors))


def compute_losses(outputs: TrainOutputs, sample: Sample,
                   config: FastTabConfig) -> Tuple[Tensor, LossBreakdown, Dict[str, Tensor]]:
    """Total ponderado, desglose escalar y los términos como tensores"""
    grid = sample.grid
    lines = outputs.lines
    dtype = lines.logits_R.dtype
    weights = config.loss

    parts: Dict[str, Tensor] = {
        "loss_counts": cross_entropy(lines.logits_R, grid.R - 1) + cross_entropy(lines.logits_C, grid.C - 1),
        "loss_header": cross_entropy(lines.logits_H, grid.H_hdr),
    }
    boundary_terms = [t for t in (_interior_mse(outputs.pred_y, grid.y), _interior_mse(outputs.pred_x, grid.x))
                      if t is not None]
    parts["loss_boundaries"] = sum(boundary_terms[1:], boundary_terms[0]) if boundary_terms else _zero(dtype)
    parts["loss_spans"] = span_loss(outputs.rs_logits, outputs.cs_logits, sample.spans, weights.anchor_upweight)

    total = (parts["loss_counts"] * weights.counts + parts["loss_header"] * weights.header
             + parts["loss_boundaries"] * weights.boundaries + parts["loss_spans"] * weights.spans)

    if outputs.row_poly is not None:
        curved = config.curved
        parts["loss_smooth"] = smoothness_penalty(outputs.row_poly) + smoothness_penalty(outputs.col_poly)
        parts["loss_noncross"] = non_crossing_penalty(outputs.row_poly) + non_crossing_penalty(outputs.col_poly)
        total = total + parts["loss_smooth"] * curved.smoothness_weight \
            + parts["loss_noncross"] * curved.non_crossing_weight
        if sample.curved is not None:
            K = outputs.row_poly.shape[1]
            curve_terms = [t for t in (
                _interior_mse(outputs.row_poly, resample(sample.curved.row_poly, K)),
                _interior_mse(outputs.col_poly, resample(sample.curved.col_poly, K))) if t is not None]
            if curve_terms:
                parts["loss_curved"] = sum(curve_terms[1:], curve_terms[0])
                total = total + parts["loss_curved"] * curved.curve_weight

    breakdown = LossBreakdown(**{name: t.item() for name, t in parts.items()}, total=total.item())
    return total, breakdown, parts


# --------------------------------------------------------------- optimizador

def cosine_lr(step: int, total_steps: int, lr: float, min_lr: float = 0.0) -> float:
    if total_steps <= 0:
        return lr
    progress = min(step, total_steps) / total_steps
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam con decaimiento de pesos desacoplado (solo matrices y kernels) y recorte por norma global"""

    def __init__(self, params: Dict[str, Tensor], config: OptimizerConfig, total_steps: int):
        self.params = params
        self.config = config
        self.total_steps = total_steps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.logger = logging.getLogger(__name__)

    @property
    def lr(self) -> float:
        return cosine_lr(self.t, self.total_steps, self.config.lr, self.config.min_lr)

    def _clip_scale(self) -> float:
        if self.config.grad_clip is None:
            return 1.0
        norm = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2))
                             for p in self.params.values() if p.grad is not None))
        if not math.isfinite(norm):
            raise NumericError(f"norma de gradiente no finita en el paso {self.t}")
        return min(1.0, self.config.grad_clip / norm) if norm > 0 else 1.0

    def step(self):
        cfg = self.config
        lr = self.lr
        scale = self._clip_scale()
        self.t += 1
        bias1 = 1.0 - cfg.beta1 ** self.t
        bias2 = 1.0 - cfg.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            grad = p.grad * scale
            self.m[name] = cfg.beta1 * self.m[name] + (1.0 - cfg.beta1) * grad
            self.v[name] = cfg.beta2 * self.v[name] + (1.0 - cfg.beta2) * grad * grad
            if lr == 0.0:
                continue
            update = (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + cfg.eps)
            if p.data.ndim >= 2 and cfg.weight_decay > 0:
                p.data = p.data - lr * cfg.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


# ----------------------------------------------------------------- bucle

def permutation(n: int, rng: Rng) -> List[int]:
    """Fisher-Yates con el Rng propio del proyecto"""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1)
        order[i], order[j] = order[j], order[i]
    return order


class Trainer:
    """Bucle de entrenamiento determinista: mismas semillas, mismos registros de pérdida"""

    def __init__(self, config: FastTabConfig, model: Optional[FastTabModel] = None,
                 seed: Optional[int] = None, batch_size: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.batch_size = batch_size or config.batch_size
        self.model = model or FastTabModel(config, Rng(self.seed).spawn("init"))
        self.rng = Rng(self.seed).spawn("train")
        self.logger = logging.getLogger(__name__)

    def train_step(self, batch: Sequence[Sample], step: int, optimizer: AdamW) -> LossBreakdown:
        optimizer.zero_grad()
        fraction = tf_fraction(step, self.config.schedule)
        breakdowns = []
        for sample in batch:
            sample_rng = self.rng.spawn(f"step{step}:{sample.id}")
            use_gt = sample_rng.bernoulli(fraction)
            outputs = forward_train(self.model, sample, use_gt, sample_rng, training=True)
            total, breakdown, _ = compute_losses(outputs, sample, self.config)
            if not breakdown.is_finite():
                raise NumericError(f"pérdida no finita en el paso {step} (muestra {sample.id}): "
                                   f"{breakdown.describe()}")
            (total * (1.0 / len(batch))).backward()
            breakdowns.append(breakdown)
        optimizer.step()
        return LossBreakdown.mean(breakdowns)

    def train(self, dataset: Sequence[Sample], epochs: int) -> TrainingHistory:
        if not dataset:
            raise DatasetError("el dataset de entrenamiento está vacío")
        for sample in dataset:
            check_caps(sample, self.config.caps)

        steps_per_epoch = math.ceil(len(dataset) / self.batch_size)
        optimizer = AdamW(self.model.named_parameters(), self.config.optimizer, steps_per_epoch * epochs)
        history = TrainingHistory(run_id=str(uuid.uuid4()), seed=self.seed).start_processing()
        self.model.train()
        step = 0
        try:
            for epoch in range(epochs):
                order = permutation(len(dataset), self.rng.spawn(f"epoch{epoch}"))
                epoch_losses = []
                for start in range(0, len(order), self.batch_size):
                    batch = [dataset[i] for i in order[start:start + self.batch_size]]
                    epoch_losses.append(self.train_step(batch, step, optimizer))
                    step += 1
                summary = LossBreakdown.mean(epoch_losses)
                history.record_epoch(summary, len(epoch_losses))
                self.logger.info(f"Época {epoch + 1}/{epochs}: {summary.describe()}")
        except NumericError as e:
            history.fail_with_error(str(e))
            self.logger.error(f"Entrenamiento abortado: {e}")
            raise
        finally:
            self.model.eval()
        history.complete_successfully()
        self.logger.info(f"Entrenamiento completado: {step} pasos en {history.execution_time}s")
        return history


def train_toy(config: FastTabConfig, dataset: Sequence[Sample], epochs: int, seed: Optional[int] = None,
              batch_size: Optional[int] = None) -> Tuple[FastTabModel, TrainingHistory]:
    trainer = Trainer(config, seed=seed, batch_size=batch_size)
    history = trainer.train(dataset, epochs)
    return trainer.model, history


# ------------------------------------------------------- verificación

def gradcheck_sample(config: FastTabConfig, seed: int) -> Sample:
    """Muestra sintética pequeña con fronteras curvas de referencia"""
    from .data import SynthStyle, render_synthetic, rotate_sample_by
    from .structure import random_structure

    rng = Rng(seed).spawn("gradcheck-sample")
    caps = config.caps
    R = min(3, caps.R_max)
    C = min(3, caps.C_max)
    table = random_structure(R, C, rng, min(2, caps.RS_max), min(2, caps.CS_max), merge_prob=0.5, H_hdr=1)
    sample = render_synthetic(R, C, table.to_span_grid(), table.H_hdr, SynthStyle(), rng, "gradcheck")
    return rotate_sample_by(sample, 3.0, config.curved.K)


CROSSING_BOUND = 2.0
CROSSING_BIAS = -2.0


def _force_crossing(model: FastTabModel):
    """Llevar la primera polilínea interior de cada eje por debajo de la frontera fija en 0"""
    for axis in ("row", "col"):
        bias = model.curved.params[f"{axis}.b"]
        if bias.shape[0] > 1:
            bias.data[1] = CROSSING_BIAS


def gradcheck_setup(config: Optional[FastTabConfig] = None,
                    seed: int = 0) -> Tuple[FastTabModel, Sample, FastTabConfig]:
    """Modelo float64 sin dropout, muestra curva y polilíneas que se cruzan"""
    config = (config or FastTabConfig.toy()).model_copy(deep=True)
    config.dtype = "float64"
    config.curved.enabled = True
    config.curved.bound = CROSSING_BOUND
    config.axial.dropout = 0.0
    config.span.dropout = 0.0
    config.schedule.perturb_sigma = 0.0
    model = FastTabModel(config, Rng(seed).spawn("init"))
    _force_crossing(model)
    sample = check_caps(gradcheck_sample(config, seed), config.caps)
    return model, sample, config


def gradcheck_terms(model: FastTabModel, sample: Sample, config: FastTabConfig) -> Dict[str, Tensor]:
    outputs = forward_train(model, sample, use_gt=True, rng=None, training=False)
    return compute_losses(outputs, sample, config)[2]


def gradcheck_losses(config: Optional[FastTabConfig] = None, seed: int = 0, eps: float = 1e-5,
                     tol: float = 1e-3, max_coords: Optional[int] = 4) -> Dict[str, GradCheckReport]:
    """Un informe por término de pérdida con ROI desde separadores GT"""
    model, sample, config = gradcheck_setup(config, seed)
    theta = model.named_parameters()

    crossing = gradcheck_terms(model, sample, config)["loss_noncross"].item()
    if max(sample.grid.R, sample.grid.C) > 1 and crossing <= 0.0:
        raise NumericError("la penalización de no cruce es nula en el punto de verificación")

    reports: Dict[str, GradCheckReport] = {}
    for term in ("loss_counts", "loss_header", "loss_boundaries", "loss_spans",
                 "loss_smooth", "loss_noncross", "loss_curved"):
        def f(term=term) -> Tensor:
            return gradcheck_terms(model, sample, config)[term]

        reports[term] = grad_check(f, theta, eps=eps, tol=tol, max_coords=max_coords,
                                   rng=Rng(seed).spawn(term))
        logger.info(f"gradcheck {term}: error relativo máximo {reports[term].max_rel_error:.3e} "
                    f"({reports[term].worst_parameter})")
    return reports
