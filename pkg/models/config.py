"""
Configuraciones de modelo, entrenamiento y decodificación (pydantic)
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import DATASET_CAPS, DEFAULTS

HeadVariant = Literal["mlp", "conv1d", "transformer", "twod"]
HEAD_VARIANTS: Tuple[str, ...] = ("mlp", "conv1d", "transformer", "twod")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class EncoderConfig(_Strict):
    """Encoder totalmente convolucional con strides anisotrópicos"""

    d_model: int = Field(32, ge=1)
    stage_channels: List[int] = Field(default_factory=lambda: [8, 16, 32, 32])
    stage_strides: List[Tuple[int, int]] = Field(
        default_factory=lambda: [(2, 2), (2, 2), (2, 2), (2, 1)])
    stage_layernorm: bool = False

    @model_validator(mode="after")
    def _check_stages(self):
        if len(self.stage_channels) != 4 or len(self.stage_strides) != 4:
            raise ValueError("el encoder tiene exactamente 4 etapas")
        if self.stage_channels[-1] != self.d_model:
            raise ValueError(f"la última etapa debe producir d_model={self.d_model} canales")
        height = width = 1
        for sh, sw in self.stage_strides:
            height *= sh
            width *= sw
        if (height, width) != (16, 8):
            raise ValueError(f"producto de strides ({height}, {width}) debe ser (16, 8)")
        return self

    @property
    def stride_product(self) -> Tuple[int, int]:
        return 16, 8


class TrmConfig(_Strict):
    """Tiny Recursive Module"""

    d_z: int = Field(32, ge=1)
    T: int = Field(6, ge=0)
    eps: float = Field(DEFAULTS["layernorm_eps"], gt=0)


class AxialConfig(_Strict):
    """Cabezal de líneas axial"""

    d_seq: int = Field(32, ge=1)
    layers: int = Field(2, ge=0)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(64, ge=1)
    dropout: float = Field(DEFAULTS["dropout"], ge=0.0, lt=1.0)
    head_variant: HeadVariant = "transformer"
    max_len: int = Field(64, ge=1)
    mlp_hidden: int = Field(32, ge=1)
    twod_blocks: int = Field(3, ge=1)
    eps: float = Field(DEFAULTS["layernorm_eps"], gt=0)

    @model_validator(mode="after")
    def _check_heads(self):
        if self.d_seq % self.heads:
            raise ValueError(f"d_seq={self.d_seq} debe ser divisible entre heads={self.heads}")
        return self


class SpanConfig(_Strict):
    """Cabezal de spans (MLP de tres etapas)"""

    hidden: List[int] = Field(default_factory=lambda: [32, 32, 32])
    dropout: float = Field(DEFAULTS["dropout"], ge=0.0, lt=1.0)
    roi_samples: int = Field(DEFAULTS["roi_samples"], ge=1)

    @field_validator("hidden")
    @classmethod
    def _three_stages(cls, value: List[int]) -> List[int]:
        if len(value) != 3 or min(value) < 1:
            raise ValueError("el MLP de spans tiene tres etapas positivas")
        return value


class CurvedConfig(_Strict):
    """Extensión de separadores curvos"""

    enabled: bool = False
    K: int = Field(DEFAULTS["curved_samples"], ge=2)
    bound: Optional[float] = Field(None, gt=0)
    smoothness_weight: float = Field(0.1, ge=0)
    non_crossing_weight: float = Field(0.1, ge=0)
    curve_weight: float = Field(1.0, ge=0)


class Caps(_Strict):
    """Topes por dataset"""

    R_max: int = Field(6, ge=1)
    C_max: int = Field(6, ge=1)
    RS_max: int = Field(2, ge=1)
    CS_max: int = Field(2, ge=1)


class LossWeights(_Strict):
    counts: float = Field(1.0, ge=0)
    header: float = Field(1.0, ge=0)
    boundaries: float = Field(1.0, ge=0)
    spans: float = Field(1.0, ge=0)
    anchor_upweight: float = Field(2.0, ge=0)


class TeacherForcingSchedule(_Strict):
    """Fracción de muestras con separadores GT para las ROI"""

    start_fraction: float = Field(1.0, ge=0, le=1)
    end_fraction: float = Field(0.2, ge=0, le=1)
    anneal_steps: int = Field(1000, ge=0)
    perturb_sigma: float = Field(0.01, ge=0)

    @model_validator(mode="after")
    def _monotone(self):
        if self.end_fraction > self.start_fraction:
            raise ValueError("end_fraction no puede superar start_fraction")
        return self


class OptimizerConfig(_Strict):
    """AdamW con recocido coseno"""

    lr: float = Field(1e-3, ge=0)
    min_lr: float = Field(0.0, ge=0)
    weight_decay: float = Field(0.01, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    grad_clip: Optional[float] = Field(1.0, gt=0)


class FastTabConfig(_Strict):
    """Configuración completa de un experimento"""

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    trm: TrmConfig = Field(default_factory=TrmConfig)
    axial: AxialConfig = Field(default_factory=AxialConfig)
    span: SpanConfig = Field(default_factory=SpanConfig)
    curved: CurvedConfig = Field(default_factory=CurvedConfig)
    caps: Caps = Field(default_factory=Caps)
    loss: LossWeights = Field(default_factory=LossWeights)
    schedule: TeacherForcingSchedule = Field(default_factory=TeacherForcingSchedule)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    dtype: Literal["float64", "float32"] = "float64"
    batch_size: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)

    @property
    def d_model(self) -> int:
        return self.encoder.d_model

    # ---------------------------------------------------------------- presets
    @classmethod
    def toy(cls) -> "FastTabConfig":
        """Configuración mínima para la verificación de gradientes"""
        return cls(
            encoder=EncoderConfig(d_model=8, stage_channels=[4, 8, 8, 8]),
            trm=TrmConfig(d_z=8, T=3),
            axial=AxialConfig(d_seq=8, heads=4, d_ff=16, dropout=0.0, max_len=16, mlp_hidden=8),
            span=SpanConfig(hidden=[8, 8, 8], dropout=0.0),
            curved=CurvedConfig(K=8),
            caps=Caps(R_max=4, C_max=4, RS_max=3, CS_max=3),
        )

    @classmethod
    def small(cls) -> "FastTabConfig":
        """Configuración de sobreajuste sobre tablas sintéticas pequeñas"""
        return cls(
            encoder=EncoderConfig(d_model=32, stage_channels=[8, 16, 32, 32]),
            trm=TrmConfig(d_z=32, T=3),
            axial=AxialConfig(d_seq=32, heads=4, d_ff=64, max_len=32, mlp_hidden=32),
            span=SpanConfig(hidden=[32, 32, 32]),
            curved=CurvedConfig(K=32),
            caps=Caps(R_max=6, C_max=6, RS_max=2, CS_max=2),
        )

    @classmethod
    def full(cls, dataset: str = "pubtabnet") -> "FastTabConfig":
        """Dimensiones de referencia y topes del dataset indicado

        El codificador conv1d usa d_seq canales ocultos, así que aquí trabaja con 256.
        """
        if dataset not in DATASET_CAPS:
            raise ValueError(f"dataset desconocido '{dataset}', opciones: {sorted(DATASET_CAPS)}")
        caps = DATASET_CAPS[dataset]
        return cls(
            encoder=EncoderConfig(d_model=1024, stage_channels=[128, 256, 512, 1024]),
            trm=TrmConfig(d_z=1024, T=6),
            axial=AxialConfig(d_seq=256, heads=4, d_ff=512, max_len=256, mlp_hidden=256),
            span=SpanConfig(hidden=[512, 512, 256]),
            curved=CurvedConfig(K=128),
            caps=Caps(R_max=caps["R_max"], C_max=caps["C_max"],
                      RS_max=caps["RS_max"], CS_max=caps["CS_max"]),
            optimizer=OptimizerConfig(lr=1e-5),
            batch_size=caps["batch_size"],
        )

    # -------------------------------------------------------------------- io
    @classmethod
    def load(cls, path: Union[str, Path]) -> "FastTabConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(mode="json"), f, indent=2, sort_keys=True)
        return path
