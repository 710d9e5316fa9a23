"""
Cabezal de líneas: secuencias axiales, codificación 1D, conteos y fronteras
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from models.config import AxialConfig, Caps
from .encoder import FeatureMap
from .errors import ConfigurationError
from .numerics import (Module, Rng, Tensor, adaptive_pool_matrix, concat, conv, dropout, ensure_tensor,
                       gelu, init_weight, interpolation_matrix, layernorm, linear,
                       multi_head_self_attention, ones, parameter, softmax, zeros)

AXES = ("row", "col")


def axial_sequences(feature_map: FeatureMap) -> Tuple[Tensor, Tensor]:
    """S_r = media sobre el ancho [d, H_f]; S_c = media sobre el alto [d, W_f]"""
    F = feature_map.tensor
    return F.mean(axis=2), F.mean(axis=1)


def decode_counts(logits_R: Tensor, logits_C: Tensor, logits_H: Tensor) -> Tuple[int, int, int]:
    """argmax con desempate al índice menor; índice k ↔ conteo k+1, cabecera recortada a R"""
    R = int(np.argmax(logits_R.data)) + 1
    C = int(np.argmax(logits_C.data)) + 1
    H = min(int(np.argmax(logits_H.data)), R)
    return R, C, H


def decode_boundaries(logits: Tensor, count: int) -> Tensor:
    """Primeros `count` logits → softmax → suma acumulada con 0 inicial, último valor exactamente 1"""
    logits = ensure_tensor(logits)
    max_count = logits.shape[-1] - 1
    if not 1 <= count <= max_count:
        raise ConfigurationError(f"conteo {count} fuera de [1, {max_count}]")
    lengths = softmax(logits[:count])
    partial = lengths.cumsum()
    # dividir por la última suma parcial deja y_R == 1 sin deriva
    scaled = partial / partial[count - 1]
    return concat([Tensor(np.zeros(1, dtype=logits.dtype)), scaled])


@dataclass
class LinesOutput:
    """Salidas del cabezal de líneas para una imagen"""

    sr_enc: Tensor
    sc_enc: Tensor
    logits_R: Tensor
    logits_C: Tensor
    logits_H: Tensor
    o_row: Tensor
    o_col: Tensor

    def decode(self) -> Tuple[int, int, int]:
        return decode_counts(self.logits_R, self.logits_C, self.logits_H)


class LinesHead(Module):
    """Codificadores axiales (mlp, conv1d, transformer o twod) y predictores de conteos e intervalos"""

    def __init__(self, config: AxialConfig, caps: Caps, d_model: int, d_z: int, rng: Rng):
        super().__init__()
        self.config = config
        self.caps = caps
        self.d_model = d_model
        self.d_z = d_z
        d_seq = config.d_seq
        p = self.params

        if config.head_variant == "twod":
            for block in range(config.twod_blocks):
                p[f"twod.block{block}.dw.w"] = init_weight(rng, (d_model, 1, 3, 3), 9)
                p[f"twod.block{block}.dw.b"] = zeros((d_model,))
                p[f"twod.block{block}.pw.w"] = init_weight(rng, (d_model, d_model, 1, 1), d_model)
                p[f"twod.block{block}.pw.b"] = zeros((d_model,))

        for axis in AXES:
            p[f"{axis}.proj.w"] = init_weight(rng, (d_seq, d_model), d_model)
            p[f"{axis}.proj.b"] = zeros((d_seq,))
            p[f"{axis}.pos"] = parameter(rng.normal(0.0, 0.02, size=(config.max_len, d_seq)))
            if config.head_variant == "transformer":
                self._init_transformer(axis, rng)
            elif config.head_variant == "mlp":
                for layer in range(config.layers):
                    p[f"{axis}.mlp{layer}.w1"] = init_weight(rng, (config.mlp_hidden, d_seq), d_seq)
                    p[f"{axis}.mlp{layer}.b1"] = zeros((config.mlp_hidden,))
                    p[f"{axis}.mlp{layer}.w2"] = init_weight(rng, (d_seq, config.mlp_hidden), config.mlp_hidden)
                    p[f"{axis}.mlp{layer}.b2"] = zeros((d_seq,))
            elif config.head_variant == "conv1d":
                for layer in range(config.layers):
                    p[f"{axis}.conv{layer}.w"] = init_weight(rng, (d_seq, d_seq, 3), d_seq * 3)
                    p[f"{axis}.conv{layer}.b"] = zeros((d_seq,))

        pooled_r = caps.R_max + 1
        pooled_c = caps.C_max + 1
        p["interval.row.w"] = init_weight(rng, (caps.R_max + 1, d_seq * pooled_r), d_seq * pooled_r)
        p["interval.row.b"] = zeros((caps.R_max + 1,))
        p["interval.col.w"] = init_weight(rng, (caps.C_max + 1, d_seq * pooled_c), d_seq * pooled_c)
        p["interval.col.b"] = zeros((caps.C_max + 1,))

        fused = d_z + 2 * d_seq
        p["counts.R.w"] = init_weight(rng, (caps.R_max, fused), fused)
        p["counts.R.b"] = zeros((caps.R_max,))
        p["counts.C.w"] = init_weight(rng, (caps.C_max, fused), fused)
        p["counts.C.b"] = zeros((caps.C_max,))
        p["counts.H.w"] = init_weight(rng, (caps.R_max + 1, fused), fused)
        p["counts.H.b"] = zeros((caps.R_max + 1,))

    def _init_transformer(self, axis: str, rng: Rng):
        cfg = self.config
        d_seq = cfg.d_seq
        p = self.params
        for layer in range(cfg.layers):
            prefix = f"{axis}.layer{layer}"
            p[f"{prefix}.ln1.gamma"] = ones((d_seq,))
            p[f"{prefix}.ln1.beta"] = zeros((d_seq,))
            for name in ("q", "k", "v", "o"):
                p[f"{prefix}.attn.w{name}"] = init_weight(rng, (d_seq, d_seq), d_seq)
                p[f"{prefix}.attn.b{name}"] = zeros((d_seq,))
            p[f"{prefix}.ln2.gamma"] = ones((d_seq,))
            p[f"{prefix}.ln2.beta"] = zeros((d_seq,))
            p[f"{prefix}.ff1.w"] = init_weight(rng, (cfg.d_ff, d_seq), d_seq)
            p[f"{prefix}.ff1.b"] = zeros((cfg.d_ff,))
            p[f"{prefix}.ff2.w"] = init_weight(rng, (d_seq, cfg.d_ff), cfg.d_ff)
            p[f"{prefix}.ff2.b"] = zeros((d_seq,))
        p[f"{axis}.tail.dw.w"] = init_weight(rng, (d_seq, 1, 3), 3)
        p[f"{axis}.tail.dw.b"] = zeros((d_seq,))
        p[f"{axis}.tail.pw.w"] = init_weight(rng, (d_seq, d_seq, 1), d_seq)
        p[f"{axis}.tail.pw.b"] = zeros((d_seq,))

    # ------------------------------------------------------------- encoding
    def _positions(self, axis: str, length: int) -> Tensor:
        table = self.params[f"{axis}.pos"]
        if length <= self.config.max_len:
            return table[:length]
        # tabla aprendida interpolada linealmente a la longitud pedida
        return ensure_tensor(interpolation_matrix(self.config.max_len, length)) @ table

    def _stem(self, S: Tensor, axis: str) -> Tensor:
        """Proyección 1×1 a d_seq más embeddings posicionales, en disposición [L, d_seq]"""
        tokens = linear(S.transpose(), self.params[f"{axis}.proj.w"], self.params[f"{axis}.proj.b"])
        return tokens + self._positions(axis, S.shape[1])

    def axial_encode(self, S: Tensor, axis: str, training: bool = False,
                     rng: Optional[Rng] = None) -> Tensor:
        """Secuencia [d_model, L] → [d_seq, L] con la variante 1D configurada"""
        variant = self.config.head_variant
        if variant == "twod":
            raise ConfigurationError("la variante twod codifica el mapa 2D completo, use encode_axes")
        if axis not in AXES:
            raise ConfigurationError(f"eje desconocido '{axis}'")
        x = self._stem(S, axis)
        p = self.params
        cfg = self.config
        rate = cfg.dropout

        if variant == "transformer":
            for layer in range(cfg.layers):
                prefix = f"{axis}.layer{layer}"
                attn_params = {name: p[f"{prefix}.attn.{name}"]
                               for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}
                normed = layernorm(x, p[f"{prefix}.ln1.gamma"], p[f"{prefix}.ln1.beta"], cfg.eps)
                attended = multi_head_self_attention(normed, cfg.heads, attn_params, rate, training, rng)
                x = x + dropout(attended, rate, training, rng)
                normed = layernorm(x, p[f"{prefix}.ln2.gamma"], p[f"{prefix}.ln2.beta"], cfg.eps)
                hidden = dropout(gelu(linear(normed, p[f"{prefix}.ff1.w"], p[f"{prefix}.ff1.b"])),
                                 rate, training, rng)
                x = x + dropout(linear(hidden, p[f"{prefix}.ff2.w"], p[f"{prefix}.ff2.b"]),
                                rate, training, rng)
            seq = x.transpose()
            mixed = conv(seq, p[f"{axis}.tail.dw.w"], padding=1, groups=cfg.d_seq,
                         bias=p[f"{axis}.tail.dw.b"])
            mixed = conv(mixed, p[f"{axis}.tail.pw.w"], bias=p[f"{axis}.tail.pw.b"])
            return gelu(seq + mixed)

        if variant == "mlp":
            for layer in range(cfg.layers):
                prefix = f"{axis}.mlp{layer}"
                hidden = dropout(gelu(linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"])), rate, training, rng)
                x = x + linear(hidden, p[f"{prefix}.w2"], p[f"{prefix}.b2"])
            return x.transpose()

        seq = x.transpose()
        for layer in range(cfg.layers):
            block = gelu(conv(seq, p[f"{axis}.conv{layer}.w"], padding=1, bias=p[f"{axis}.conv{layer}.b"]))
            seq = seq + dropout(block, rate, training, rng)
        return seq

    def _encode_twod(self, feature_map: FeatureMap, training: bool, rng: Optional[Rng]) -> Tuple[Tensor, Tensor]:
        F = feature_map.tensor
        p = self.params
        for block in range(self.config.twod_blocks):
            prefix = f"twod.block{block}"
            mixed = conv(F, p[f"{prefix}.dw.w"], padding=1, groups=self.d_model, bias=p[f"{prefix}.dw.b"])
            mixed = conv(mixed, p[f"{prefix}.pw.w"], bias=p[f"{prefix}.pw.b"])
            F = F + dropout(gelu(mixed), self.config.dropout, training, rng)
        # reducción a 1D solo al final
        return self._stem(F.mean(axis=2), "row").transpose(), self._stem(F.mean(axis=1), "col").transpose()

    def encode_axes(self, feature_map: FeatureMap, training: bool = False,
                    rng: Optional[Rng] = None) -> Tuple[Tensor, Tensor]:
        """(Sr_enc [d_seq, H_f], Sc_enc [d_seq, W_f]) para cualquier variante"""
        if self.config.head_variant == "twod":
            return self._encode_twod(feature_map, training, rng)
        S_r, S_c = axial_sequences(feature_map)
        return (self.axial_encode(S_r, "row", training, rng),
                self.axial_encode(S_c, "col", training, rng))

    # ----------------------------------------------------------- prediction
    def predict_counts(self, z: Tensor, sr_sum: Tensor, sc_sum: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """Logits de R [R_max], C [C_max] y H [R_max+1] a partir de [z, sr_sum, sc_sum]"""
        fused = concat([z, sr_sum, sc_sum])
        p = self.params
        return (linear(fused, p["counts.R.w"], p["counts.R.b"]),
                linear(fused, p["counts.C.w"], p["counts.C.b"]),
                linear(fused, p["counts.H.w"], p["counts.H.b"]))

    def interval_logits(self, S_enc: Tensor, axis: str) -> Tensor:
        """Pooling adaptativo a P = max_count+1, aplanado y proyección lineal a max_count+1 logits"""
        max_count = self.caps.R_max if axis == "row" else self.caps.C_max
        pooled_len = max_count + 1
        pool = ensure_tensor(adaptive_pool_matrix(S_enc.shape[1], pooled_len).T.astype(S_enc.dtype))
        pooled = S_enc @ pool
        return linear(pooled.reshape(-1), self.params[f"interval.{axis}.w"], self.params[f"interval.{axis}.b"])

    def forward(self, feature_map: FeatureMap, z: Tensor, training: bool = False,
                rng: Optional[Rng] = None) -> LinesOutput:
        sr_enc, sc_enc = self.encode_axes(feature_map, training, rng)
        logits_R, logits_C, logits_H = self.predict_counts(z, sr_enc.mean(axis=1), sc_enc.mean(axis=1))
        return LinesOutput(sr_enc=sr_enc, sc_enc=sc_enc, logits_R=logits_R, logits_C=logits_C,
                           logits_H=logits_H, o_row=self.interval_logits(sr_enc, "row"),
                           o_col=self.interval_logits(sc_enc, "col"))
