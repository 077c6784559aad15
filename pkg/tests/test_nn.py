import math

import numpy as np
import pytest

from myopred import nn
from myopred.nn import functional as F
from myopred.nn import Tensor
from references import naive_conv2d, scalar_lstm


def t(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def weighted_sum(out, seed=0):
    w = np.random.default_rng(seed).normal(size=out.shape)
    return (out * w).sum()


class TestConv2d:
    def test_ones(self):
        out = F.conv2d(t(np.ones((1, 1, 3, 3))), t(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 9.0

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 1, 5, 4))
        out = F.conv2d(t(x), t(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
    def test_matches_naive(self, rng, stride, pad):
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = F.conv2d(t(x), t(w), t(b), stride, pad)
        np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, stride, pad), atol=1e-10)

    def test_output_size(self):
        out = F.conv2d(t(np.zeros((1, 2, 9, 7))), t(np.zeros((3, 2, 3, 3))), stride=2, padding=1)
        assert out.shape == (1, 3, 5, 4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            F.conv2d(t(np.zeros((1, 2, 4, 4))), t(np.zeros((1, 3, 3, 3))))

    @pytest.mark.parametrize("shape,stride,pad", [((1, 2, 5, 5), 1, 1), ((2, 1, 6, 6), 2, 1), ((1, 3, 4, 5), 1, 0)])
    def test_gradcheck(self, rng, shape, stride, pad):
        x = t(rng.normal(size=shape))
        w = t(rng.normal(size=(2, shape[1], 3, 3)))
        b = t(rng.normal(size=2))
        err = nn.grad_check(lambda: weighted_sum(F.conv2d(x, w, b, stride, pad)), [x, w, b])
        assert err < 1e-4


class TestElementwise:
    def test_relu(self):
        np.testing.assert_array_equal(F.relu(t([-1.0, 2.0])).data, [0.0, 2.0])

    def test_sigmoid_tanh_values(self):
        assert F.sigmoid(t(0.0)).item() == 0.5
        assert F.tanh(t(0.0)).item() == 0.0

    def test_sigmoid_extreme_is_finite(self):
        out = F.sigmoid(t([-800.0, 800.0]))
        assert np.all(np.isfinite(out.data))

    @pytest.mark.parametrize("op", [F.sigmoid, F.tanh, F.relu])
    @pytest.mark.parametrize("shape", [(3,), (2, 4), (2, 2, 3)])
    def test_gradcheck(self, rng, op, shape):
        x = t(rng.normal(size=shape) + 0.05)
        assert nn.grad_check(lambda: weighted_sum(op(x)), [x]) < 1e-4

    @pytest.mark.parametrize("shape", [(3,), (2, 4), (1, 5)])
    def test_arithmetic_gradcheck(self, rng, shape):
        a = t(rng.normal(size=shape))
        b = t(rng.uniform(1.0, 2.0, size=shape[-1:]))

        def f():
            out = (a * b - a / b + (a - 0.3) ** 2) @ t(np.ones((shape[-1], 2))) if a.ndim == 2 else a * b - a / b + (a - 0.3) ** 2
            return weighted_sum(out)

        assert nn.grad_check(f, [a, b]) < 1e-4

    def test_non_finite_raises_with_op_name(self):
        with pytest.raises(nn.NonFiniteError, match="log"):
            F.log(t([0.0]))
        with pytest.raises(nn.NonFiniteError, match="div"):
            t([1.0]) / t([0.0])


class TestPooling:
    def test_gap_constant(self):
        x = np.zeros((1, 2, 4, 4))
        x[0, 0] = 3.0
        x[0, 1] = -1.5
        np.testing.assert_allclose(F.global_avg_pool(t(x)).data, [[3.0, -1.5]])

    def test_maxpool_values(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(F.max_pool2d(t(x), 2).data[0, 0], [[5, 7], [13, 15]])

    def test_maxpool_3x3_stride2_pad1_shape(self):
        assert F.max_pool2d(t(np.zeros((1, 1, 8, 8))), 3, 2, 1).shape == (1, 1, 4, 4)

    @pytest.mark.parametrize("shape,k,s,p", [((1, 2, 4, 4), 2, 2, 0), ((2, 1, 6, 6), 3, 2, 1), ((1, 1, 5, 5), 2, 1, 0)])
    def test_maxpool_gradcheck(self, rng, shape, k, s, p):
        x = t(rng.normal(size=shape))
        assert nn.grad_check(lambda: weighted_sum(F.max_pool2d(x, k, s, p)), [x]) < 1e-4

    @pytest.mark.parametrize("shape", [(1, 2, 3, 3), (2, 3, 4, 2), (3, 1, 1, 5)])
    def test_gap_gradcheck(self, rng, shape):
        x = t(rng.normal(size=shape))
        assert nn.grad_check(lambda: weighted_sum(F.global_avg_pool(x)), [x]) < 1e-4


class TestLinear:
    def test_identity(self, rng):
        x = rng.normal(size=(3, 4))
        out = F.linear(t(x), t(np.eye(4)), t(np.zeros(4)))
        np.testing.assert_array_equal(out.data, x)

    @pytest.mark.parametrize("b,i,o", [(1, 3, 2), (4, 5, 3), (2, 1, 1)])
    def test_gradcheck(self, rng, b, i, o):
        x, w, bias = t(rng.normal(size=(b, i))), t(rng.normal(size=(o, i))), t(rng.normal(size=o))
        assert nn.grad_check(lambda: weighted_sum(F.linear(x, w, bias)), [x, w, bias]) < 1e-7

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            F.linear(t(np.zeros((2, 3))), t(np.zeros((2, 4))))


class TestBatchNorm:
    def test_standardized_input_passes_through(self, rng):
        x = rng.normal(size=(8, 2, 4, 4))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = F.batch_norm(t(x), t(np.ones(2)), t(np.zeros(2)), np.zeros(2), np.ones(2), True)
        # the only deviation is the eps=1e-5 variance floor
        np.testing.assert_allclose(out.data, x / math.sqrt(1.0 + 1e-5), atol=1e-12)
        np.testing.assert_allclose(out.data, x, rtol=1e-5)

    def test_zero_gamma_gives_beta(self, rng):
        x = rng.normal(size=(4, 3, 2, 2))
        beta = np.array([0.5, -1.0, 2.0])
        out = F.batch_norm(t(x), t(np.zeros(3)), t(beta), np.zeros(3), np.ones(3), True)
        np.testing.assert_allclose(out.data, np.broadcast_to(beta.reshape(1, 3, 1, 1), x.shape))

    def test_eval_uses_running_stats(self, rng):
        x = rng.normal(size=(2, 2, 3, 3))
        mean, var = np.array([0.3, -0.2]), np.array([2.0, 0.5])
        gamma, beta = np.array([1.5, 0.7]), np.array([0.1, 0.2])
        out = F.batch_norm(t(x), t(gamma), t(beta), mean.copy(), var.copy(), False)
        expected = np.empty_like(x)
        for c in range(2):
            expected[:, c] = gamma[c] * (x[:, c] - mean[c]) / math.sqrt(var[c] + 1e-5) + beta[c]
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_running_stats_momentum(self, rng):
        x = rng.normal(loc=2.0, size=(4, 1, 3, 3))
        rm, rv = np.zeros(1), np.ones(1)
        F.batch_norm(t(x), t(np.ones(1)), t(np.zeros(1)), rm, rv, True)
        assert rm[0] == pytest.approx(0.1 * x.mean())
        assert rv[0] == pytest.approx(0.9 + 0.1 * x.var())

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            F.batch_norm(t(np.zeros((0, 1, 2, 2))), t(np.ones(1)), t(np.zeros(1)), np.zeros(1), np.ones(1), True)

    @pytest.mark.parametrize("shape", [(2, 2, 3, 3), (4, 1, 2, 2), (3, 3, 1, 2)])
    @pytest.mark.parametrize("training", [True, False])
    def test_gradcheck(self, rng, shape, training):
        c = shape[1]
        x, g, b = t(rng.normal(size=shape)), t(rng.normal(size=c)), t(rng.normal(size=c))
        rm, rv = rng.normal(size=c), rng.uniform(0.5, 2.0, size=c)

        def f():
            return weighted_sum(F.batch_norm(x, g, b, rm.copy(), rv.copy(), training))

        assert nn.grad_check(f, [x, g, b]) < 1e-4


class TestResidualBlock:
    def _zero(self, block):
        for name, p in block.named_parameters().items():
            if "conv" in name:
                p.data[...] = 0.0

    def test_zero_weights_give_relu_of_input(self, rng):
        block = nn.BasicBlock(3, 3, 1, rng=rng)
        self._zero(block)
        x = rng.normal(size=(2, 3, 5, 5))
        out = block(t(x))
        np.testing.assert_allclose(out.data, np.maximum(x, 0.0))

    def test_downsample_shape(self, rng):
        block = nn.BasicBlock(4, 8, 2, rng=rng)
        assert block.downsample
        assert block(t(rng.normal(size=(1, 4, 6, 6)))).shape == (1, 8, 3, 3)

    @pytest.mark.parametrize("downsample", [False, True])
    def test_gradcheck(self, rng, downsample):
        block = nn.BasicBlock(1, 2 if downsample else 1, 2 if downsample else 1, rng=rng)
        x = t(rng.normal(size=(1, 1, 6, 6)) if not downsample else rng.normal(size=(2, 1, 6, 6)))
        params = block.parameters()
        err = nn.grad_check(lambda: weighted_sum(block(x)), [x, *params])
        assert err < 1e-4


class TestLSTM:
    def test_zero_weights_closed_form(self, rng):
        hidden = 3
        c = rng.normal(size=(2, hidden))
        x = rng.normal(size=(2, 4))
        z = np.zeros
        h1, c1 = F.lstm_cell(t(x), t(rng.normal(size=(2, hidden))), t(c), t(z((12, 4))), t(z((12, 3))), t(z(12)))
        np.testing.assert_array_equal(c1.data, 0.5 * c)
        np.testing.assert_allclose(h1.data, 0.5 * np.tanh(0.5 * c), atol=1e-15)

    def test_zero_state_zero_input(self, rng):
        h1, _ = F.lstm_cell(t(np.zeros((1, 2))), t(np.zeros((1, 3))), t(np.zeros((1, 3))),
                            t(rng.normal(size=(12, 2))), t(rng.normal(size=(12, 3))), t(np.zeros(12)))
        np.testing.assert_array_equal(h1.data, 0.0)

    def test_matches_scalar_reference(self, rng):
        args = [rng.normal(size=s) for s in [(2, 3), (2, 4), (2, 4), (16, 3), (16, 4), (16,)]]
        h, c = F.lstm_cell(*[t(a) for a in args])
        h_ref, c_ref = scalar_lstm(*args)
        np.testing.assert_allclose(h.data, h_ref, atol=1e-12)
        np.testing.assert_allclose(c.data, c_ref, atol=1e-12)

    @pytest.mark.parametrize("b,i,hdim", [(1, 2, 2), (2, 3, 4), (3, 1, 3)])
    def test_gradcheck(self, rng, b, i, hdim):
        args = [t(rng.normal(size=s)) for s in [(b, i), (b, hdim), (b, hdim), (4 * hdim, i), (4 * hdim, hdim), (4 * hdim,)]]

        def f():
            h, c = F.lstm_cell(*args)
            return weighted_sum(h) + weighted_sum(c, seed=1)

        assert nn.grad_check(f, args) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            F.lstm_cell(t(np.zeros((1, 2))), t(np.zeros((1, 3))), t(np.zeros((1, 3))),
                        t(np.zeros((12, 5))), t(np.zeros((12, 3))), t(np.zeros(12)))


class TestLosses:
    def test_mse_zero(self, rng):
        a = rng.normal(size=5)
        assert F.mse_loss(t(a), a).item() == 0.0

    def test_bce_half(self):
        assert F.bce_loss(t([0.5, 0.5]), [0.0, 1.0]).item() == pytest.approx(math.log(2.0), abs=1e-15)

    def test_hand_formula(self, rng):
        p, y = rng.uniform(0.05, 0.95, size=6), rng.integers(0, 2, size=6).astype(float)
        q = rng.normal(size=6)
        expected_bce = -np.mean([yy * math.log(pp) + (1 - yy) * math.log(1 - pp) for pp, yy in zip(p, y)])
        expected_mse = sum((a - b) ** 2 for a, b in zip(q, p)) / 6
        assert F.bce_loss(t(p), y).item() == pytest.approx(expected_bce, rel=1e-12)
        assert F.mse_loss(t(q), p).item() == pytest.approx(expected_mse, rel=1e-12)

    def test_bce_clamps(self):
        assert np.isfinite(F.bce_loss(t([0.0, 1.0]), [1.0, 0.0]).item())

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_gradcheck(self, rng, n):
        p = t(rng.uniform(0.1, 0.9, size=n))
        q = t(rng.normal(size=n))
        y = rng.integers(0, 2, size=n).astype(float)
        assert nn.grad_check(lambda: F.bce_loss(p, y) + F.mse_loss(q, p), [p, q]) < 1e-4


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = nn.Parameter(np.array([1.0, -2.0]))
        p.grad = np.zeros(2)
        opt = nn.Adam([p], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_is_lr(self):
        p = nn.Parameter(np.array([0.0]))
        p.grad = np.array([1.0])
        nn.Adam([p], lr=0.01).step()
        assert p.data[0] == pytest.approx(-0.01, rel=1e-7)

    def test_quadratic_descends(self):
        p = nn.Parameter(np.array([1.0]))
        opt = nn.Adam([p], lr=0.1)
        seen = [abs(p.data[0])]
        for _ in range(10):
            p.grad = 2 * p.data.copy()
            opt.step()
            seen.append(abs(p.data[0]))
        assert all(b < a for a, b in zip(seen, seen[1:]))

    def test_weight_decay_enters_gradient(self):
        p = nn.Parameter(np.array([2.0]))
        p.grad = np.array([0.0])
        nn.Adam([p], lr=0.1, weight_decay=1e-4).step()
        # g = wd * p > 0, bias-corrected step is lr * sign(g)
        assert p.data[0] == pytest.approx(1.9, abs=1e-4)

    def test_rejects_non_positive_lr(self):
        p = nn.Parameter(np.array([0.0]))
        p.grad = np.array([1.0])
        with pytest.raises(ValueError):
            nn.Adam([p], lr=0.0).step()


class TestGradCheckHarness:
    def test_constant_function(self):
        x = t(np.ones(3))
        assert nn.grad_check(lambda: (x * 0.0).sum() + 5.0, [x]) == 0.0

    def test_detects_wrong_gradient(self):
        x = t(np.array([0.3, 0.7]))

        def bad():
            # forward is x^2, backward claims 3x
            return nn.tensor.make_op((x.data**2).sum(), (x,), lambda g: (g * 3 * x.data,), "bad")

        assert nn.grad_check(bad, [x]) > 0.1


class TestTape:
    def test_shared_subexpression(self):
        x = t(np.array([2.0]), grad=True)
        y = x * x
        z = y + y * x
        z.sum().backward()
        # d/dx (x^2 + x^3) = 2x + 3x^2
        assert x.grad[0] == pytest.approx(16.0)

    def test_no_grad_builds_no_graph(self):
        x = t(np.ones(2), grad=True)
        with nn.no_grad():
            y = x * 2
        assert not y.requires_grad

    def test_forward_deterministic(self, rng):
        block = nn.BasicBlock(2, 4, 2, rng=rng)
        x = t(rng.normal(size=(2, 2, 8, 8)))
        a = block(x).data.copy()
        block.eval()
        block.train()
        b = block(x).data
        np.testing.assert_array_equal(a, b)

    def test_guided_relu_gate(self, rng):
        x = t(rng.normal(size=20), grad=True)
        upstream = rng.normal(size=20)
        with F.guided_relu():
            (F.relu(x) * upstream).sum().backward()
        expected = np.where((x.data > 0) & (upstream > 0), upstream, 0.0)
        np.testing.assert_array_equal(x.grad, expected)
        assert np.all(x.grad[x.data <= 0] == 0.0)

    def test_unique_parameter_names(self, rng):
        block = nn.BasicBlock(2, 4, 2, rng=rng)
        names = list(block.named_parameters())
        assert len(names) == len(set(names))
        assert "down_conv.weight" in names
