"""
Tiny Recursive Module: refinamiento residual iterativo de un latente global
"""

from typing import List, Optional

from models.config import TrmConfig
from .encoder import FeatureMap
from .numerics import Module, Rng, Tensor, concat, gelu, init_weight, layernorm, linear, ones, parameter, zeros


def global_pool(feature_map: FeatureMap) -> Tensor:
    """Descriptor global g[c] = media espacial del canal c"""
    return feature_map.tensor.mean(axis=(1, 2))


class TinyRecursiveModule(Module):
    """z⁽ᵗ⁺¹⁾ = z⁽ᵗ⁾ + W_out·GELU(W_in·[LN(z⁽ᵗ⁾), g]), sin sesgos"""

    def __init__(self, config: TrmConfig, d_model: int, rng: Rng):
        super().__init__()
        self.config = config
        self.d_model = d_model
        d_z = config.d_z
        self.params["z0"] = parameter(rng.normal(0.0, 1.0, size=(d_z,)))
        self.params["w_in"] = init_weight(rng, (d_z, d_z + d_model), d_z + d_model)
        self.params["w_out"] = init_weight(rng, (d_z, d_z), d_z)
        self.params["ln.gamma"] = ones((d_z,))
        self.params["ln.beta"] = zeros((d_z,))

    def step(self, z: Tensor, g: Tensor) -> Tensor:
        """ψ(LN(z), g): el incremento residual de una iteración"""
        normed = layernorm(z, self.params["ln.gamma"], self.params["ln.beta"], self.config.eps)
        hidden = gelu(linear(concat([normed, g]), self.params["w_in"]))
        return linear(hidden, self.params["w_out"])

    def refine(self, g: Tensor, T: Optional[int] = None, trace: Optional[List[Tensor]] = None) -> Tensor:
        """Aplicar T iteraciones desde z0; trace recibe cada z⁽ᵗ⁾ si se indica"""
        steps = self.config.T if T is None else T
        z = self.params["z0"]
        if trace is not None:
            trace.append(z)
        for _ in range(steps):
            z = z + self.step(z, g)
            if trace is not None:
                trace.append(z)
        return z
