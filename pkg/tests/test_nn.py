import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from glickformer import gradsuite
from glickformer.nn import (
    LayerNorm, Linear, MultiHeadAttention, Parameter, RngState, ShapeError, glorot_bound,
    grad_check, init_parameter, layer_norm, linear, load_parameters, mish, relative_error,
    save_parameters, softmax, unique_parameters,
)


class TestLinear:
    def test_identity(self):
        assert_array_equal(linear(np.array([1.0, 2.0]), np.eye(2), np.zeros(2)), [1.0, 2.0])

    def test_hand_value(self):
        assert_array_equal(linear(np.array([1.0, 1.0]), np.array([[2.0], [3.0]])), [5.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linear(np.ones(3), np.ones((2, 2)))

    def test_weight_grad_tight(self):
        rng = np.random.default_rng(0)
        lin = Linear("l", 4, 3, rng)
        x = rng.normal(size=(5, 4))

        def run():
            lin.W.zero_grad()
            lin.b.zero_grad()
            y, c = lin.forward(x)
            lin.backward(np.ones_like(y), c)
            return float(y.sum())

        assert grad_check(run, [lin.W], tolerance=1e-6).passed

    @pytest.mark.parametrize("seed", range(20))
    def test_random_shapes(self, seed):
        rng = np.random.default_rng(seed)
        n_in, n_out = rng.integers(1, 7, size=2)
        lead = tuple(rng.integers(1, 4, size=rng.integers(1, 3)))
        lin = Linear("l", n_in, n_out, rng)
        lin.b.value[...] = rng.normal(size=n_out)
        x = Parameter("x", rng.normal(size=lead + (n_in,)))
        R = rng.normal(size=lead + (n_out,))

        def run():
            for p in (x, lin.W, lin.b):
                p.zero_grad()
            y, c = lin.forward(x.value)
            x.grad += lin.backward(R, c)
            return float((y * R).sum())

        assert grad_check(run, [x, lin.W, lin.b], tolerance=1e-4).passed


class TestLayerNorm:
    def test_constant_row(self):
        y, _ = layer_norm(np.full((2, 5), 3.0), np.ones(5), np.zeros(5))
        assert_array_equal(y, 0.0)

    def test_moments(self):
        x = np.random.default_rng(1).normal(3, 5, size=(10, 64))
        y, _ = layer_norm(x, np.ones(64), np.zeros(64))
        assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
        # eps = 1e-5 pulls the variance just below one
        assert_allclose(y.var(axis=1), 1.0, atol=1e-6)

    def test_backward_tight(self):
        rep = gradsuite.check_layer_norm(seed=3, tol=1e-6)
        assert rep.passed, list(rep.lines())


class TestSoftmax:
    def test_symmetric(self):
        assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_no_overflow(self):
        y = softmax(np.array([1000.0, 0.0]))
        assert y[0] == 1.0 and 0.0 <= y[1] < 1e-300

    def test_masked(self):
        y = softmax(np.array([[1.0, -np.inf, 2.0], [-np.inf, -np.inf, -np.inf]]))
        assert y[0, 1] == 0.0
        assert y[0].sum() == pytest.approx(1.0, abs=1e-12)
        assert_array_equal(y[1], 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=10, size=(50, 7))
        x[rng.random(x.shape) < 0.3] = -np.inf
        x[:, 0] = rng.normal(size=50)
        y = softmax(x)
        assert (y >= 0).all()
        assert_allclose(y.sum(axis=1), 1.0, atol=1e-9)


class TestMish:
    def test_values(self):
        assert mish(np.array([0.0]))[0] == 0.0
        want = 1.0 * math.tanh(math.log1p(math.e))
        assert mish(np.array([1.0]))[0] == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.865098, abs=1e-6)
        assert mish(np.array([20.0]))[0] == pytest.approx(20.0, abs=1e-6)

    def test_large_negative(self):
        y = mish(np.array([-1000.0, -50.0]))
        assert np.isfinite(y).all() and abs(y).max() < 1e-18


class TestAttention:
    def _mha(self, d=6, heads=2, head_dim=3, seed=0):
        return MultiHeadAttention("a", d, heads, head_dim, np.random.default_rng(seed))

    def test_single_token(self):
        mha = self._mha()
        x = np.random.default_rng(1).normal(size=(1, 6))
        out, _ = mha.forward(x)
        v = x @ mha.v.W.value + mha.v.b.value
        assert_allclose(out, v @ mha.o.W.value + mha.o.b.value, atol=1e-14)

    def test_uniform_weights(self):
        mha = self._mha()
        mha.q.W.value[...] = 0.0
        x = np.random.default_rng(2).normal(size=(5, 6))
        _, cache = mha.forward(x)
        assert_allclose(mha.attention_weights(cache), 0.2, atol=1e-15)

    def test_bias_concentrates(self):
        mha = self._mha()
        x = np.random.default_rng(3).normal(size=(5, 6))
        bias = np.zeros((2, 5, 5))
        bias[:, :, 3] = 1e3
        _, cache = mha.forward(x, bias=bias)
        w = mha.attention_weights(cache)
        assert (w.argmax(axis=-1) == 3).all()

    def test_key_mask(self):
        mha = self._mha()
        x = np.random.default_rng(4).normal(size=(2, 4, 6))
        mask = np.array([[True, True, False, False], [True, False, False, False]])
        _, cache = mha.forward(x, key_mask=mask)
        w = mha.attention_weights(cache).reshape(2, 2, 4, 4)
        assert_array_equal(w[0, :, :, 2:], 0.0)
        assert_array_equal(w[1, :, :, 1:], 0.0)
        assert_allclose(w.sum(-1), 1.0, atol=1e-12)

    def test_bias_shape_checked(self):
        with pytest.raises(ShapeError):
            self._mha().forward(np.ones((4, 6)), bias=np.zeros((2, 3, 3)))


@pytest.mark.parametrize("case", ["linear", "layer_norm", "mish", "attention"])
@pytest.mark.parametrize("seed", range(20))
def test_layer_gradients(case, seed):
    rep = gradsuite.LAYER_CASES[case](seed=seed)
    assert rep.passed, list(rep.lines())


class TestGradCheck:
    def test_sum_of_squares(self):
        p = Parameter("p", np.random.default_rng(0).normal(size=(3, 4)))

        def run():
            p.grad[...] = 2 * p.value
            return float((p.value ** 2).sum())

        rep = grad_check(run, [p], tolerance=1e-9)
        assert rep.passed and rep.max_error < 1e-9

    def test_corrupted_backward_fails(self, monkeypatch):
        orig = LayerNorm.backward

        def broken(self, dy, cache):
            dx = orig(self, dy, cache)
            self.gain.grad *= 1.01
            return dx

        monkeypatch.setattr(LayerNorm, "backward", broken)
        rep = gradsuite.check_layer_norm(seed=0)
        assert not rep.passed
        assert any(line.startswith("FAIL") and "gain" in line for line in rep.lines())

    def test_spatial_block(self):
        # the smallest spatial block this architecture allows (d must be a multiple of 32)
        rep = gradsuite.check_spatial(seed=0, max_entries=64)
        assert rep.max_error < 1e-4, list(rep.lines())

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)
        assert relative_error(2.0, 1.0) == 0.5


class TestInit:
    def test_zeros(self):
        assert_array_equal(init_parameter("z", (3, 4), "zeros").value, 0.0)

    def test_glorot_variance(self):
        p = init_parameter("w", (100, 100), "uniform-glorot", RngState(0).stream("init"))
        b = glorot_bound((100, 100))
        assert np.abs(p.value).max() <= b
        assert p.value.var() == pytest.approx(b * b / 3, rel=0.1)
        assert b * b / 3 == pytest.approx(2 / 200)

    def test_deterministic(self):
        a = init_parameter("w", (5, 5), "uniform-glorot", RngState(9).stream("init"))
        b = init_parameter("w", (5, 5), "uniform-glorot", RngState(9).stream("init"))
        c = init_parameter("w", (5, 5), "uniform-glorot", RngState(9).stream("batch"))
        assert_array_equal(a.value, b.value)
        assert not np.array_equal(a.value, c.value)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            init_parameter("w", (2,), "normal", np.random.default_rng(0))

    def test_duplicate_names(self):
        a, b = Parameter("x", np.zeros(1)), Parameter("x", np.zeros(1))
        assert unique_parameters([a, a]) == [a]
        with pytest.raises(ValueError, match="duplicate"):
            unique_parameters([a, b])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        ps = [Parameter("a.W", rng.normal(size=(3, 2))), Parameter("b", rng.normal(size=(4,))),
              Parameter("s", np.array(2.5))]
        save_parameters(tmp_path / "c.glkw", ps)
        back = load_parameters(tmp_path / "c.glkw")
        assert list(back) == ["a.W", "b", "s"]
        for p in ps:
            assert_array_equal(back[p.name], p.value)

    def test_layout(self, tmp_path):
        save_parameters(tmp_path / "c.glkw", [Parameter("ab", np.array([[1.0, 2.0]]))])
        raw = (tmp_path / "c.glkw").read_bytes()
        assert raw[:4] == b"GLKW"
        assert raw[4:12] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little")
        assert raw[12:14] == (2).to_bytes(2, "little") and raw[14:16] == b"ab"
        assert raw[16] == 2
        assert np.frombuffer(raw[25:], "<f8").tolist() == [1.0, 2.0]

    def test_rejects_garbage(self, tmp_path):
        (tmp_path / "x").write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(ValueError):
            load_parameters(tmp_path / "x")
        save_parameters(tmp_path / "y", [Parameter("a", np.zeros(2))])
        (tmp_path / "y").write_bytes((tmp_path / "y").read_bytes() + b"\0")
        with pytest.raises(ValueError, match="trailing"):
            load_parameters(tmp_path / "y")
