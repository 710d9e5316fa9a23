"""
Tests para el núcleo numérico (tensores, autograd, Rng, grad check)
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modules.errors import ConfigurationError, DimensionError
from modules.numerics import (Module, Rng, Tensor, adaptive_pool_matrix, conv, cross_entropy, derive_seed,
                              dropout, gelu, grad_check, init_weight, interpolation_matrix, layernorm, linear,
                              log_softmax, multi_head_self_attention, no_grad, parameter, softmax, zeros)


class TestTensorOps:
    """Operaciones y gradientes básicos"""

    def test_add_broadcast_gradient(self):
        """El gradiente de un sesgo difundido suma sobre las filas"""
        x = parameter(np.ones((3, 2)))
        b = parameter(np.zeros(2))
        (x + b).sum().backward()
        assert np.allclose(b.grad, [3.0, 3.0])

    def test_matmul_gradient(self):
        a = parameter(np.array([[1.0, 2.0]]))
        b = parameter(np.array([[3.0], [4.0]]))
        (a @ b).sum().backward()
        assert np.allclose(a.grad, [[3.0, 4.0]])
        assert np.allclose(b.grad, [[1.0], [2.0]])

    def test_division_is_exact(self):
        """x / x da exactamente 1"""
        x = Tensor(np.array([0.3, 7.1, 1e-7]))
        assert np.array_equal((x / x).data, np.ones(3))

    def test_leaf_gradients_accumulate(self):
        w = parameter(np.array([2.0]))
        (w * 3.0).sum().backward()
        (w * 3.0).sum().backward()
        assert np.allclose(w.grad, [6.0])

    def test_fancy_index_gradient(self):
        """Índices repetidos acumulan gradiente"""
        x = parameter(np.arange(4.0))
        x[np.array([1, 1, 3])].sum().backward()
        assert np.allclose(x.grad, [0.0, 2.0, 0.0, 1.0])

    def test_item_requires_single_element(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros(3)).item()

    def test_no_grad_disables_tape(self):
        w = parameter(np.ones(2))
        with no_grad():
            y = w * 2.0
        assert not y.requires_grad


class TestLayers:
    """Capas y funciones de activación"""

    def test_softmax_sums_to_one(self):
        p = softmax(Tensor(np.array([1000.0, 1000.0, -5.0])))
        assert math.isclose(p.data.sum(), 1.0)
        assert np.all(np.isfinite(p.data))

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor(np.array([0.2, -1.0, 3.0]))
        assert np.allclose(log_softmax(x).data, np.log(softmax(x).data))

    def test_cross_entropy_of_uniform_logits(self):
        """Logits uniformes sobre 10 clases: ln 10"""
        assert math.isclose(cross_entropy(Tensor(np.zeros(10)), 3).item(), math.log(10.0))

    def test_layernorm_output_statistics(self):
        x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
        y = layernorm(x, parameter(np.ones(4)), parameter(np.zeros(4)))
        assert abs(y.data.mean()) < 1e-12
        assert math.isclose(y.data.var(), 1.0, rel_tol=1e-4)

    def test_gelu_known_values(self):
        y = gelu(Tensor(np.array([0.0, 1.0])))
        assert y.data[0] == 0.0
        assert math.isclose(y.data[1], 0.8413447460685429, rel_tol=1e-12)

    def test_linear_rejects_bad_shape(self):
        with pytest.raises(DimensionError):
            linear(Tensor(np.ones(3)), parameter(np.ones((2, 4))))

    def test_dropout_identity_outside_training(self):
        x = Tensor(np.ones(5))
        assert dropout(x, 0.5, training=False) is x

    def test_dropout_requires_rng_in_training(self):
        with pytest.raises(ConfigurationError):
            dropout(Tensor(np.ones(5)), 0.5, training=True)

    def test_conv_matches_manual_correlation(self):
        x = Tensor(np.arange(16.0).reshape(1, 4, 4))
        w = parameter(np.ones((1, 1, 2, 2)))
        y = conv(x, w, stride=2)
        assert y.shape == (1, 2, 2)
        assert np.allclose(y.data[0], [[0 + 1 + 4 + 5, 2 + 3 + 6 + 7], [8 + 9 + 12 + 13, 10 + 11 + 14 + 15]])

    def test_conv_groups_mismatch(self):
        with pytest.raises(ConfigurationError):
            conv(Tensor(np.ones((3, 4, 4))), parameter(np.ones((2, 1, 3, 3))), groups=2)

    def test_attention_heads_must_divide(self):
        with pytest.raises(ConfigurationError):
            multi_head_self_attention(Tensor(np.ones((3, 6))), 4, {})


class TestMatrices:
    """Matrices constantes de pooling e interpolación"""

    @given(st.integers(1, 40), st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_adaptive_pool_rows_average(self, length, pooled):
        m = adaptive_pool_matrix(length, pooled)
        assert m.shape == (pooled, length)
        assert np.allclose(m.sum(axis=1), 1.0)

    def test_interpolation_keeps_endpoints(self):
        m = interpolation_matrix(5, 9)
        values = np.array([0.0, 1.0, 4.0, 9.0, 16.0])
        out = m @ values
        assert out[0] == 0.0 and out[-1] == 16.0
        assert np.allclose(out[::2], values)


class TestRng:
    """Generador determinista"""

    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_spawn_independent_of_parent_state(self):
        parent = Rng(5)
        child = parent.spawn("x").random()
        parent.random()
        assert parent.spawn("x").random() == child

    def test_derive_seed_depends_on_key(self):
        assert derive_seed(1, "a") != derive_seed(1, "b")
        assert derive_seed(1, "a") == derive_seed(1, "a")

    def test_integers_range(self):
        rng = Rng(3)
        values = {rng.integers(2, 5) for _ in range(200)}
        assert values == {2, 3, 4}


class TestGradCheck:
    """Verificación de gradientes por diferencias centrales"""

    def test_tanh_mlp_passes(self):
        rng = Rng(0)
        w1 = init_weight(rng, (4, 3), 3)
        w2 = init_weight(rng, (2, 4), 4)
        x = Tensor(np.array([0.1, -0.2, 0.3]))

        def f():
            h = linear(x, w1).tanh()
            return (linear(h, w2) * linear(h, w2)).sum()

        report = grad_check(f, {"w1": w1, "w2": w2})
        assert report.passed
        assert report.max_rel_error < 1e-6

    def test_eps_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            grad_check(lambda: Tensor(np.zeros(())), {}, eps=0.0)


class TestModule:
    """Contenedor de parámetros"""

    def _module(self):
        parent = Module()
        parent.params["w"] = zeros((2, 2))
        child = Module()
        child.params["b"] = zeros((2,))
        parent.children["child"] = child
        return parent

    def test_named_parameters_prefixes(self):
        assert sorted(self._module().named_parameters()) == ["child.b", "w"]

    def test_load_arrays_rejects_missing(self):
        with pytest.raises(DimensionError):
            self._module().load_arrays({"w": np.zeros((2, 2))})

    def test_load_arrays_rejects_shape(self):
        with pytest.raises(DimensionError):
            self._module().load_arrays({"w": np.zeros((3, 2)), "child.b": np.zeros(2)})


class TestOpGradients:
    """Cada operación diferenciable frente a diferencias centrales en 20 formas aleatorias"""

    CASES = 20

    def _check(self, f, theta):
        report = grad_check(f, theta, eps=1e-5, tol=1e-3)
        assert report.passed, f"{report.worst_parameter}: {report.max_rel_error:.3e}"

    def _head(self, rng, shape):
        """Proyección escalar con pesos aleatorios (evita gradientes nulos por simetría)"""
        return Tensor(rng.normal(0.0, 1.0, size=shape))

    def test_conv(self):
        rng = Rng(101)
        for case in range(self.CASES):
            cin = rng.integers(1, 4)
            groups = cin if case % 3 == 0 else 1
            cout = groups * rng.integers(1, 3)
            k = rng.integers(1, 4)
            stride = rng.integers(1, 3)
            padding = rng.integers(0, 2)
            if case % 4 == 1:
                x = parameter(rng.normal(0.0, 1.0, size=(cin, rng.integers(k, 8))))
                w = parameter(rng.normal(0.0, 0.5, size=(cout, cin // groups, k)))
            else:
                x = parameter(rng.normal(0.0, 1.0, size=(cin, rng.integers(k, 7), rng.integers(k, 7))))
                w = parameter(rng.normal(0.0, 0.5, size=(cout, cin // groups, k, k)))
            bias = parameter(rng.normal(0.0, 0.5, size=(cout,)))
            out_shape = conv(x, w, stride=stride, padding=padding, groups=groups, bias=bias).shape
            head = self._head(rng, out_shape)
            self._check(lambda: (conv(x, w, stride=stride, padding=padding, groups=groups, bias=bias)
                                 * head).sum(), {"x": x, "w": w, "bias": bias})

    def test_layernorm(self):
        rng = Rng(102)
        for _ in range(self.CASES):
            n, d = rng.integers(1, 4), rng.integers(2, 7)
            x = parameter(rng.normal(0.0, 1.0, size=(n, d)))
            gamma = parameter(rng.normal(1.0, 0.2, size=(d,)))
            beta = parameter(rng.normal(0.0, 0.2, size=(d,)))
            head = self._head(rng, (n, d))
            self._check(lambda: (layernorm(x, gamma, beta) * head).sum(), {"x": x, "gamma": gamma, "beta": beta})

    def test_softmax(self):
        rng = Rng(103)
        for _ in range(self.CASES):
            shape = tuple(rng.integers(1, 5) for _ in range(rng.integers(1, 4)))
            axis = rng.integers(0, len(shape))
            x = parameter(rng.normal(0.0, 2.0, size=shape))
            head = self._head(rng, shape)
            self._check(lambda: (softmax(x, axis=axis) * head).sum(), {"x": x})
            self._check(lambda: (log_softmax(x, axis=axis) * head).sum(), {"x": x})

    def test_gelu(self):
        rng = Rng(104)
        for _ in range(self.CASES):
            shape = tuple(rng.integers(1, 6) for _ in range(rng.integers(1, 3)))
            x = parameter(rng.normal(0.0, 2.0, size=shape))
            head = self._head(rng, shape)
            self._check(lambda: (gelu(x) * head).sum(), {"x": x})

    def test_attention(self):
        rng = Rng(105)
        for _ in range(self.CASES):
            heads = rng.integers(1, 3)
            d = heads * rng.integers(1, 4)
            length = rng.integers(1, 6)
            x = parameter(rng.normal(0.0, 1.0, size=(length, d)))
            params = {}
            for name in ("q", "k", "v", "o"):
                params[f"w{name}"] = init_weight(rng, (d, d), d)
                params[f"b{name}"] = parameter(rng.normal(0.0, 0.1, size=(d,)))
            head = self._head(rng, (length, d))
            self._check(lambda: (multi_head_self_attention(x, heads, params) * head).sum(), {"x": x, **params})

    def test_cumsum(self):
        rng = Rng(106)
        for _ in range(self.CASES):
            shape = tuple(rng.integers(1, 6) for _ in range(rng.integers(1, 4)))
            axis = rng.integers(0, len(shape))
            x = parameter(rng.normal(0.0, 1.0, size=shape))
            head = self._head(rng, shape)
            self._check(lambda: (x.cumsum(axis=axis) * head).sum(), {"x": x})
