"""
Encoder de imagen totalmente convolucional con strides anisotrópicos
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from models.config import EncoderConfig
from .errors import InputError
from .numerics import Module, Rng, Tensor, conv, ensure_tensor, gelu, init_weight, layernorm, ones, zeros

MIN_HEIGHT = 16
MIN_WIDTH = 8
PAD_VALUE = 1.0


@dataclass
class FeatureMap:
    """Mapa de características d_model × H_f × W_f y dimensiones de la imagen original"""

    tensor: Tensor
    height: int
    width: int

    @property
    def channels(self) -> int:
        return int(self.tensor.shape[0])

    @property
    def H_f(self) -> int:
        return int(self.tensor.shape[1])

    @property
    def W_f(self) -> int:
        return int(self.tensor.shape[2])


def pad_to_stride(image: np.ndarray, stride: Tuple[int, int] = (16, 8)) -> np.ndarray:
    """Rellenar abajo y a la derecha con blanco hasta múltiplos del stride"""
    _, height, width = image.shape
    target_h = math.ceil(height / stride[0]) * stride[0]
    target_w = math.ceil(width / stride[1]) * stride[1]
    if (target_h, target_w) == (height, width):
        return image
    return np.pad(image, ((0, 0), (0, target_h - height), (0, target_w - width)),
                  constant_values=PAD_VALUE)


class ImageEncoder(Module):
    """Cuatro etapas conv(k3, stride) → GELU → conv(k3) → GELU"""

    def __init__(self, config: EncoderConfig, rng: Rng):
        super().__init__()
        self.config = config
        in_channels = 3
        for index, (channels, _) in enumerate(zip(config.stage_channels, config.stage_strides)):
            self.params[f"stage{index}.conv_a.w"] = init_weight(rng, (channels, in_channels, 3, 3), in_channels * 9)
            self.params[f"stage{index}.conv_a.b"] = zeros((channels,))
            self.params[f"stage{index}.conv_b.w"] = init_weight(rng, (channels, channels, 3, 3), channels * 9)
            self.params[f"stage{index}.conv_b.b"] = zeros((channels,))
            if config.stage_layernorm:
                self.params[f"stage{index}.ln.gamma"] = ones((channels,))
                self.params[f"stage{index}.ln.beta"] = zeros((channels,))
            in_channels = channels

    def encode(self, image, dtype: Optional[np.dtype] = None) -> FeatureMap:
        """Imagen [3, H, W] en [0, 1] → FeatureMap con forma (d_model, ceil(H/16), ceil(W/8))"""
        data = image.data if isinstance(image, Tensor) else np.asarray(image)
        if data.ndim != 3 or data.shape[0] != 3:
            raise InputError(f"la imagen debe tener forma (3, H, W), recibida {data.shape}")
        _, height, width = data.shape
        if height < MIN_HEIGHT or width < MIN_WIDTH:
            raise InputError(f"imagen {height}x{width} menor que el mínimo {MIN_HEIGHT}x{MIN_WIDTH}")
        if not np.all(np.isfinite(data)):
            raise InputError("la imagen contiene valores no finitos")

        padded = pad_to_stride(data, self.config.stride_product)
        if padded.shape != data.shape:
            self.logger.debug(f"imagen {height}x{width} rellenada a {padded.shape[1]}x{padded.shape[2]}")
        dtype = dtype or self.params["stage0.conv_a.w"].dtype
        if isinstance(image, Tensor) and padded is data:
            x = image
        else:
            x = ensure_tensor(padded.astype(dtype))

        for index, stride in enumerate(self.config.stage_strides):
            x = gelu(conv(x, self.params[f"stage{index}.conv_a.w"], stride=stride, padding=1,
                          bias=self.params[f"stage{index}.conv_a.b"]))
            x = gelu(conv(x, self.params[f"stage{index}.conv_b.w"], stride=1, padding=1,
                          bias=self.params[f"stage{index}.conv_b.b"]))
            if self.config.stage_layernorm:
                x = layernorm(x.transpose(1, 2, 0), self.params[f"stage{index}.ln.gamma"],
                              self.params[f"stage{index}.ln.beta"]).transpose(2, 0, 1)
        return FeatureMap(tensor=x, height=height, width=width)
