"""
Librería mínima de tensores densos con diferenciación automática en modo reverso

Cada operación registra sus padres y una función de retropropagación; backward()
ordena topológicamente el grafo y lo recorre en orden inverso.
"""

import contextlib
import hashlib
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Indica si las operaciones registran el grafo en este hilo"""
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Desactivar el registro del grafo dentro del bloque"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _as_array(data: ArrayLike, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray):
        if dtype is not None:
            return data.astype(dtype, copy=False)
        if data.dtype in (np.float32, np.float64):
            return data
        return data.astype(np.float64)
    return np.asarray(data, dtype=dtype or np.float64)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reducir un gradiente con broadcasting a la forma original"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Arreglo denso con participación opcional en la cinta de gradientes"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None,
                 _prev: Tuple["Tensor", ...] = (), _op: str = ""):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._prev = _prev
        self._op = _op
        self._backward: Optional[Callable[[], None]] = None

    # ------------------------------------------------------------------ props
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() requiere un único elemento, forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op='{self._op}', requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # -------------------------------------------------------------- autograd
    def _accumulate(self, grad: np.ndarray):
        grad = _unbroadcast(np.asarray(grad), self.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True).reshape(self.shape)
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[ArrayLike] = None):
        """Propagar gradientes desde este tensor hacia todas sus hojas"""
        if not self.requires_grad:
            raise NumericError("backward() sobre un tensor sin requires_grad")
        if grad is None:
            if self.size != 1:
                raise DimensionError(f"backward() requiere un escalar, forma {self.shape}")
            grad = np.ones_like(self.data)

        # Orden topológico iterativo (los grafos del TRM pueden ser profundos)
        topo: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        for node in topo:
            if node._prev:
                node.grad = None
        self.grad = _as_array(grad, self.data.dtype).reshape(self.shape)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        out = _result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            def _backward():
                if self.requires_grad:
                    self._accumulate(out.grad)
                if other.requires_grad:
                    other._accumulate(out.grad)
            out._backward = _backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        return self + (-ensure_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return ensure_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        out = _result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            def _backward():
                if self.requires_grad:
                    self._accumulate(out.grad * other.data)
                if other.requires_grad:
                    other._accumulate(out.grad * self.data)
            out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        out = _result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            def _backward():
                if self.requires_grad:
                    self._accumulate(out.grad / other.data)
                if other.requires_grad:
                    other._accumulate(-out.grad * self.data / (other.data * other.data))
            out._backward = _backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return ensure_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise DimensionError("solo se admiten exponentes escalares")
        out = _result(self.data ** exponent, (self,), "pow")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * exponent * self.data ** (exponent - 1))
            out._backward = _backward
        return out

    def __matmul__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        if self.ndim < 2 or other.ndim < 2 or self.shape[-1] != other.shape[-2]:
            raise DimensionError(f"matmul incompatible: {self.shape} @ {other.shape}")
        out = _result(np.matmul(self.data, other.data), (self, other), "matmul")
        if out.requires_grad:
            def _backward():
                if self.requires_grad:
                    self._accumulate(np.matmul(out.grad, np.swapaxes(other.data, -1, -2)))
                if other.requires_grad:
                    other._accumulate(np.matmul(np.swapaxes(self.data, -1, -2), out.grad))
            out._backward = _backward
        return out

    def __rmatmul__(self, other) -> "Tensor":
        return ensure_tensor(other) @ self

    # ------------------------------------------------------------ reductions
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = _result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            def _backward():
                grad = out.grad
                if axis is not None and not keepdims:
                    grad = np.expand_dims(grad, axis)
                self._accumulate(np.broadcast_to(grad, self.shape))
            out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # --------------------------------------------------------------- shaping
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _result(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad.reshape(self.shape))
            out._backward = _backward
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        out = _result(np.transpose(self.data, axes), (self,), "transpose")
        if out.requires_grad:
            inverse = np.argsort(axes)

            def _backward():
                self._accumulate(np.transpose(out.grad, inverse))
            out._backward = _backward
        return out

    def __getitem__(self, index) -> "Tensor":
        out = _result(self.data[index], (self,), "index")
        if out.requires_grad:
            parts = index if isinstance(index, tuple) else (index,)
            basic = all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)

            def _backward():
                grad = np.zeros_like(self.data)
                if basic:
                    grad[index] += out.grad
                else:
                    np.add.at(grad, index, out.grad)
                self._accumulate(grad)
            out._backward = _backward
        return out

    # ----------------------------------------------------------- elementwise
    def exp(self) -> "Tensor":
        out = _result(np.exp(self.data), (self,), "exp")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * out.data)
            out._backward = _backward
        return out

    def log(self) -> "Tensor":
        out = _result(np.log(self.data), (self,), "log")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad / self.data)
            out._backward = _backward
        return out

    def tanh(self) -> "Tensor":
        out = _result(np.tanh(self.data), (self,), "tanh")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * (1.0 - out.data ** 2))
            out._backward = _backward
        return out

    def relu(self) -> "Tensor":
        out = _result(np.maximum(self.data, 0.0), (self,), "relu")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * (self.data > 0))
            out._backward = _backward
        return out

    def cumsum(self, axis: int = -1) -> "Tensor":
        out = _result(np.cumsum(self.data, axis=axis), (self,), "cumsum")
        if out.requires_grad:
            def _backward():
                flipped = np.flip(out.grad, axis=axis)
                self._accumulate(np.flip(np.cumsum(flipped, axis=axis), axis=axis))
            out._backward = _backward
        return out


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], op: str) -> Tensor:
    """Construir el tensor de salida y enlazarlo al grafo si corresponde"""
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=track, _prev=parents if track else (), _op=op)


def ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data: ArrayLike, dtype=np.float64) -> Tensor:
    """Tensor hoja entrenable"""
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenar tensores a lo largo de un eje"""
    tensors = [ensure_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    if out.requires_grad:
        sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def _backward():
            for t, g in zip(tensors, np.split(out.grad, sizes, axis=axis)):
                if t.requires_grad:
                    t._accumulate(g)
        out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Apilar tensores de igual forma en un eje nuevo"""
    tensors = [ensure_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack con formas distintas: {sorted(shapes)}")
    return concat([t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) if axis >= 0
                   else t.reshape(t.shape + (1,)) for t in tensors], axis=axis)


# ---------------------------------------------------------------------- layers

def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y = x Wᵀ + b para x de forma [N, din] (o [din])"""
    x = ensure_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: entrada {x.shape} incompatible con pesos {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"linear: sesgo {b.shape} incompatible con pesos {W.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, -1)
    y = x @ W.transpose()
    if b is not None:
        y = y + b
    return y.reshape(-1) if squeeze else y


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax estabilizado restando el máximo"""
    x = ensure_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax sobre eje vacío, forma {x.shape}")
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = ensure_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"log_softmax sobre eje vacío, forma {x.shape}")
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalización por vector sobre el último eje, seguida de afín"""
    x = ensure_tensor(x)
    if x.shape[-1] < 1:
        raise DimensionError("layernorm requiere d >= 1")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(f"layernorm: gamma {gamma.shape}/beta {beta.shape} vs entrada {x.shape}")
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (variance + eps) ** -0.5 * gamma + beta


_erf = np.vectorize(math.erf, otypes=[np.float64])
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU exacta x·Φ(x) con la función de error"""
    x = ensure_tensor(x)
    cdf = 0.5 * (1.0 + _erf(x.data * _INV_SQRT2))
    out = _result((x.data * cdf).astype(x.dtype, copy=False), (x,), "gelu")
    if out.requires_grad:
        def _backward():
            pdf = np.exp(-0.5 * x.data ** 2) * _INV_SQRT2PI
            x._accumulate(out.grad * (cdf + x.data * pdf))
        out._backward = _backward
    return out


def dropout(x: Tensor, p: float, training: bool, rng: Optional["Rng"] = None) -> Tensor:
    """Dropout invertido; identidad fuera de entrenamiento"""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ConfigurationError("dropout en entrenamiento requiere un Rng")
    keep = (rng.uniform(size=x.shape) >= p).astype(x.dtype)
    return x * (keep / (1.0 - p))


def conv(x: Tensor, w: Tensor, stride: Union[int, Sequence[int]] = 1,
         padding: Union[int, Sequence[int]] = 0, groups: int = 1,
         bias: Optional[Tensor] = None) -> Tensor:
    """Correlación cruzada 2D [Cin,H,W] o 1D [Cin,L] con grupos"""
    x = ensure_tensor(x)
    one_d = x.ndim == 2
    if one_d:
        if w.ndim != 3:
            raise DimensionError(f"conv1d: pesos {w.shape} deben ser [Cout, Cin/g, k]")
        x = x.reshape(x.shape[0], 1, x.shape[1])
        w = w.reshape(w.shape[0], w.shape[1], 1, w.shape[2])
        stride = (1, stride if isinstance(stride, int) else stride[0])
        padding = (0, padding if isinstance(padding, int) else padding[0])
    out = _conv2d(x, w, _pair(stride), _pair(padding), groups)
    if bias is not None:
        out = out + bias.reshape(-1, 1, 1)
    if one_d:
        out = out.reshape(out.shape[0], out.shape[2])
    return out


def _pair(value) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    return int(value[0]), int(value[1])


def _conv2d(x: Tensor, w: Tensor, stride: Tuple[int, int], padding: Tuple[int, int],
            groups: int) -> Tensor:
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d: entrada {x.shape} / pesos {w.shape}")
    cin, height, width = x.shape
    cout, cin_g, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups or cin // groups != cin_g:
        raise ConfigurationError(
            f"conv: Cin={cin}, Cout={cout} y pesos {w.shape} incompatibles con groups={groups}")
    sh, sw = stride
    ph, pw = padding
    out_h = (height + 2 * ph - kh) // sh + 1
    out_w = (width + 2 * pw - kw) // sw + 1
    if out_h <= 0 or out_w <= 0:
        raise ConfigurationError(f"conv: dimensión de salida no positiva ({out_h}, {out_w})")

    padded = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::sh, ::sw][:, :out_h, :out_w]
    cout_g = cout // groups
    win_g = windows.reshape(groups, cin_g, out_h, out_w, kh, kw)
    w_g = w.data.reshape(groups, cout_g, cin_g, kh, kw)
    result = np.einsum("gchwij,gocij->gohw", win_g, w_g, optimize=True)
    out = _result(result.reshape(cout, out_h, out_w), (x, w), "conv")
    if out.requires_grad:
        def _backward():
            grad = out.grad.reshape(groups, cout_g, out_h, out_w)
            if w.requires_grad:
                gw = np.einsum("gohw,gchwij->gocij", grad, win_g, optimize=True)
                w._accumulate(gw.reshape(w.shape))
            if x.requires_grad:
                gwin = np.einsum("gohw,gocij->gchwij", grad, w_g, optimize=True)
                gwin = gwin.reshape(cin, out_h, out_w, kh, kw)
                gpad = np.zeros_like(padded)
                for i in range(kh):
                    for j in range(kw):
                        gpad[:, i:i + sh * out_h:sh, j:j + sw * out_w:sw] += gwin[:, :, :, i, j]
                x._accumulate(gpad[:, ph:ph + height, pw:pw + width])
        out._backward = _backward
    return out


def multi_head_self_attention(x: Tensor, heads: int, params: Mapping[str, Tensor],
                              dropout_p: float = 0.0, training: bool = False,
                              rng: Optional["Rng"] = None) -> Tensor:
    """Atención escalada por producto punto, multi-cabeza, sobre x [L, d]

    params: wq, bq, wk, bk, wv, bv, wo, bo
    """
    length, d = x.shape
    if heads < 1 or d % heads:
        raise ConfigurationError(f"atención: d={d} no divisible entre {heads} cabezas")
    head_dim = d // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(length, heads, head_dim).transpose(1, 0, 2)

    q = split(linear(x, params["wq"], params["bq"]))
    k = split(linear(x, params["wk"], params["bk"]))
    v = split(linear(x, params["wv"], params["bv"]))
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(head_dim))
    weights = dropout(softmax(scores, axis=-1), dropout_p, training, rng)
    context = (weights @ v).transpose(1, 0, 2).reshape(length, d)
    return linear(context, params["wo"], params["bo"])


def adaptive_pool_matrix(length: int, pooled: int) -> np.ndarray:
    """Matriz [pooled, length] del promedio adaptativo 1D"""
    matrix = np.zeros((pooled, length))
    for i in range(pooled):
        start = (i * length) // pooled
        end = -((-(i + 1) * length) // pooled)
        matrix[i, start:end] = 1.0 / (end - start)
    return matrix


def interpolation_matrix(length_in: int, length_out: int) -> np.ndarray:
    """Matriz [length_out, length_in] de interpolación lineal con extremos alineados"""
    matrix = np.zeros((length_out, length_in))
    if length_in == 1:
        matrix[:, 0] = 1.0
        return matrix
    if length_out == 1:
        matrix[0, 0] = 1.0
        return matrix
    positions = np.arange(length_out) * (length_in - 1) / (length_out - 1)
    for i, pos in enumerate(positions):
        lo = min(int(math.floor(pos)), length_in - 2)
        frac = pos - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, lo + 1] += frac
    return matrix


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Entropía cruzada de un vector de logits contra una clase"""
    return -log_softmax(logits, axis=-1)[target]


# ------------------------------------------------------------------------- Rng

_MASK64 = (1 << 64) - 1


def _rotl(value: int, shift: int) -> int:
    return ((value << shift) | (value >> (64 - shift))) & _MASK64


def _splitmix64(state: int) -> Tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(master_seed: int, key: str) -> int:
    """Semilla derivada estable: hash(master_seed, key) en 64 bits"""
    digest = hashlib.blake2b(f"{master_seed & _MASK64}:{key}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


class Rng:
    """Generador xoshiro256** sembrado con splitmix64

    El flujo depende solo de la semilla: idéntico en cualquier plataforma.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        state = self.seed
        self._s = []
        for _ in range(4):
            state, value = _splitmix64(state)
            self._s.append(value)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniforme en [0, 1) con 53 bits"""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def _random_array(self, count: int) -> np.ndarray:
        values = [self.next_u64() >> 11 for _ in range(count)]
        return np.array(values, dtype=np.float64) * (1.0 / (1 << 53))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        if size is None:
            return low + (high - low) * self.random()
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape)) if shape else 1
        return (low + (high - low) * self._random_array(count)).reshape(shape)

    def normal(self, mean: float = 0.0, std: float = 1.0, size=None):
        """Gaussiana por Box-Muller"""
        shape = () if size is None else ((size,) if isinstance(size, int) else tuple(size))
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u = self._random_array(2 * pairs)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:pairs]))
        angle = 2.0 * math.pi * u[pairs:]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
        z = mean + std * z
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, low: int, high: int) -> int:
        """Entero uniforme en [low, high)"""
        if high <= low:
            raise ConfigurationError(f"rango vacío [{low}, {high})")
        return low + int(self.random() * (high - low))

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def choice(self, items: Sequence):
        return items[self.integers(0, len(items))]

    def spawn(self, key: str) -> "Rng":
        """Generador hijo independiente para una clave (p.ej. el id de una muestra)"""
        return Rng(derive_seed(self.seed, key))


# ------------------------------------------------------------------ grad check

@dataclass
class GradCheckReport:
    """Resultado de la comparación gradiente analítico vs diferencias centrales"""

    max_rel_error: float
    worst_parameter: str
    worst_index: Tuple[int, ...]
    checked: int
    tol: float
    per_parameter: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def to_dict(self) -> Dict:
        return {
            "max_rel_error": self.max_rel_error,
            "worst_parameter": self.worst_parameter,
            "worst_index": list(self.worst_index),
            "checked": self.checked,
            "tol": self.tol,
            "passed": self.passed,
            "per_parameter": self.per_parameter,
        }


def grad_check(f: Callable[[], Tensor], theta: Union[Mapping[str, Tensor], Sequence[Tensor]],
               eps: float = 1e-5, tol: float = 1e-3, max_coords: Optional[int] = None,
               rng: Optional[Rng] = None, floor: float = 1e-6) -> GradCheckReport:
    """Comparar gradientes de modo reverso con diferencias centrales coordenada a coordenada

    f no recibe argumentos: lee los tensores de theta, que se perturban in situ.
    Con max_coords se revisa un subconjunto aleatorio de coordenadas por tensor.
    """
    if eps <= 0:
        raise ConfigurationError(f"eps debe ser positivo, recibido {eps}")
    if not 1e-6 <= eps <= 1e-4:
        logger.warning(f"eps={eps} fuera del rango recomendado [1e-6, 1e-4]")
    named = dict(theta) if isinstance(theta, Mapping) else {str(i): t for i, t in enumerate(theta)}

    for tensor in named.values():
        tensor.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError(f"f no finita en theta: {loss.item()}")
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in named.items()}

    worst = (0.0, "", ())
    per_parameter: Dict[str, float] = {}
    checked = 0
    for name, tensor in named.items():
        flat_indices = np.arange(tensor.size)
        if max_coords is not None and tensor.size > max_coords:
            picker = rng or Rng(0)
            flat_indices = sorted({picker.integers(0, tensor.size) for _ in range(max_coords)})
        param_worst = 0.0
        for flat in flat_indices:
            index = np.unravel_index(int(flat), tensor.shape)
            original = tensor.data[index].copy()
            with no_grad():
                tensor.data[index] = original + eps
                f_plus = f().item()
                tensor.data[index] = original - eps
                f_minus = f().item()
            tensor.data[index] = original
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError(f"f no finita al perturbar {name}{tuple(int(i) for i in index)}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            exact = float(analytic[name][index])
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            checked += 1
            param_worst = max(param_worst, rel)
            if rel > worst[0]:
                worst = (rel, name, tuple(int(i) for i in index))
        per_parameter[name] = param_worst

    return GradCheckReport(max_rel_error=worst[0], worst_parameter=worst[1],
                           worst_index=worst[2], checked=checked, tol=tol,
                           per_parameter=per_parameter)


# -------------------------------------------------------------- contenedores

def init_weight(rng: Rng, shape: Sequence[int], fan_in: int, dtype=np.float64) -> Tensor:
    """Pesos uniformes en ±1/sqrt(fan_in)"""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return parameter(rng.uniform(-bound, bound, size=tuple(shape)), dtype)


def zeros(shape: Sequence[int], dtype=np.float64) -> Tensor:
    return parameter(np.zeros(tuple(shape)), dtype)


def ones(shape: Sequence[int], dtype=np.float64) -> Tensor:
    return parameter(np.ones(tuple(shape)), dtype)


class Module:
    """Contenedor de parámetros con nombre y submódulos"""

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.children: Dict[str, "Module"] = {}
        self.training = False
        self.logger = logging.getLogger(self.__class__.__module__)

    def named_parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        named = {f"{prefix}{name}": tensor for name, tensor in self.params.items()}
        for child_name, child in self.children.items():
            named.update(child.named_parameters(f"{prefix}{child_name}."))
        return named

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.named_parameters().values()))

    def zero_grad(self):
        for tensor in self.named_parameters().values():
            tensor.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def load_arrays(self, arrays: Mapping[str, np.ndarray]):
        """Reemplazar los datos de cada parámetro por el arreglo del mismo nombre"""
        named = self.named_parameters()
        missing = sorted(set(named) - set(arrays))
        unexpected = sorted(set(arrays) - set(named))
        if missing or unexpected:
            raise DimensionError(f"parámetros faltantes {missing} / inesperados {unexpected}")
        for name, tensor in named.items():
            array = np.asarray(arrays[name])
            if array.shape != tensor.shape:
                raise DimensionError(f"{name}: forma {array.shape} vs esperada {tensor.shape}")
            tensor.data = array.astype(tensor.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for tensor in self.named_parameters().values():
            tensor.data = tensor.data.astype(dtype)
        return self
