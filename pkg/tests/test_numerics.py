import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspvmunet.numerics import (
    BatchNorm2d,
    DimensionError,
    NumericError,
    Parameter,
    Tensor,
    default_dtype,
    functional as F,
    gradcheck,
)

GRAD_TOL = 1e-5


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def naive_conv2d(x, w, b, stride, pad, dil, groups):
    B, C, H, W = x.shape
    O, Cg, kh, kw = w.shape
    Ho = (H + 2 * pad - dil * (kh - 1) - 1) // stride + 1
    Wo = (W + 2 * pad - dil * (kw - 1) - 1) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    og = O // groups
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            g = o // og
            for i in range(Ho):
                for j in range(Wo):
                    s = 0.0
                    for c in range(Cg):
                        for u in range(kh):
                            for v in range(kw):
                                s += w[o, c, u, v] * xp[n, g * Cg + c, i * stride + u * dil, j * stride + v * dil]
                    out[n, o, i, j] = s + (b[o] if b is not None else 0.0)
    return out


class TestConv2d:
    def test_box_sum(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        y = F.conv2d(x, w, padding=1).data
        assert y[0, 0, 1, 1] == 9
        assert y[0, 0, 0, 0] == 4

    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((2, 3, 5, 4))
        w = np.eye(3).reshape(3, 3, 1, 1)
        y = F.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3))).data
        np.testing.assert_array_equal(y, x)

    @pytest.mark.parametrize(
        "cin,cout,k,stride,pad,dil,groups",
        [(2, 3, 3, 1, 3, 3, 1), (4, 4, 3, 1, 1, 1, 4), (2, 1, 7, 1, 9, 3, 1), (4, 6, 3, 2, 1, 1, 2), (3, 5, 1, 1, 0, 1, 1), (3, 4, 3, 2, 1, 2, 1)],
    )
    def test_matches_naive_loop(self, cin, cout, k, stride, pad, dil, groups):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, cin, 5, 6))
        w = rng.standard_normal((cout, cin // groups, k, k))
        b = rng.standard_normal(cout)
        y = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad, dil, groups).data
        np.testing.assert_allclose(y, naive_conv2d(x, w, b, stride, pad, dil, groups), atol=1e-6)

    def test_output_size_formula(self):
        x = Tensor(np.zeros((1, 1, 11, 9)))
        w = Tensor(np.zeros((1, 1, 3, 3)))
        y = F.conv2d(x, w, stride=2, padding=2, dilation=2)
        assert y.shape[2:] == ((11 + 4 - 4 - 1) // 2 + 1, (9 + 4 - 4 - 1) // 2 + 1)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(1, 3, 4, 4\).*\(2, 2, 3, 3\)"):
            F.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 2, 3, 3))))

    @pytest.mark.parametrize("groups,stride,dil", [(1, 1, 3), (4, 1, 1), (2, 2, 1), (1, 2, 2)])
    def test_gradient(self, groups, stride, dil):
        rng = np.random.default_rng(2)
        x = t64(rng.standard_normal((2, 4, 6, 5)))
        w = t64(rng.standard_normal((4, 4 // groups, 3, 3)))
        b = t64(rng.standard_normal(4))
        rep = gradcheck(lambda: F.conv2d(x, w, b, stride, dil, dil, groups), [("x", x), ("w", w), ("b", b)])
        assert rep.max_rel_error < GRAD_TOL, rep


class TestLayerNorm:
    def test_constant_vector(self):
        y = F.layer_norm(Tensor(np.full(4, 5.0)), Tensor(np.ones(4)), Tensor(np.zeros(4))).data
        np.testing.assert_array_equal(y, np.zeros(4))

    def test_already_normalized(self):
        y = F.layer_norm(Tensor(np.array([1.0, -1.0])), None, None).data
        np.testing.assert_allclose(y, [1.0, -1.0], atol=1e-5)

    def test_statistics(self):
        x = np.random.default_rng(3).standard_normal(16) * 4 + 2
        y = F.layer_norm(Tensor(x), None, None).data
        assert abs(y.mean()) < 1e-6
        assert abs(y.var() - 1) < 1e-3

    def test_empty_axis(self):
        with pytest.raises(DimensionError):
            F.layer_norm(Tensor(np.zeros((3, 0))), None, None)

    def test_gradient_channel_axis(self):
        rng = np.random.default_rng(4)
        x = t64(rng.standard_normal((2, 5, 3, 3)))
        g = t64(rng.standard_normal(5))
        b = t64(rng.standard_normal(5))
        rep = gradcheck(lambda: F.layer_norm(x, g, b, axis=1), [("x", x), ("g", g), ("b", b)])
        assert rep.max_rel_error < GRAD_TOL


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(F.softmax(Tensor(np.zeros(2))).data, [0.5, 0.5])

    def test_no_overflow(self):
        y = F.softmax(Tensor(np.array([1000.0, 0.0]))).data
        assert y[0] == pytest.approx(1.0) and y[1] == pytest.approx(0.0, abs=1e-300)

    def test_direct_formula(self):
        x = np.random.default_rng(5).standard_normal(8)
        np.testing.assert_allclose(F.softmax(Tensor(x)).data, np.exp(x) / np.exp(x).sum(), atol=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
    def test_sums_to_one_and_shift_invariant(self, xs, c):
        x = np.array(xs)
        y = F.softmax(Tensor(x)).data
        assert abs(y.sum() - 1) < 1e-6
        assert np.all(y > 0)
        np.testing.assert_allclose(F.softmax(Tensor(x + c)).data, y, atol=1e-9)


class TestBackward:
    def test_linear_case(self):
        w = t64(np.array([1.0, 2.0, 3.0]))
        x = Tensor(np.array([4.0, -1.0, 0.5]))
        (w * x).sum().backward()
        np.testing.assert_array_equal(w.grad, x.data)

    def test_sigmoid_at_zero(self):
        w = t64(np.zeros(5))
        F.sigmoid(w).sum().backward()
        np.testing.assert_allclose(w.grad, 0.25)

    def test_accumulates(self):
        w = t64(np.ones(3))
        loss = (w * 2.0).sum()
        loss.backward()
        loss.backward()
        np.testing.assert_array_equal(w.grad, 4.0)

    def test_non_scalar_rejected(self):
        w = t64(np.ones(3))
        with pytest.raises(ValueError, match="scalar"):
            (w * 2.0).backward()

    def test_shared_subexpression(self):
        w = t64(np.array([3.0]))
        y = w * w
        (y + y).sum().backward()
        np.testing.assert_allclose(w.grad, [12.0])


UNARY = {
    "sigmoid": F.sigmoid,
    "gelu": F.gelu,
    "silu": F.silu,
    "softplus": F.softplus,
    "exp": F.exp,
    "softmax": lambda x: F.softmax(x, axis=1),
    "log": lambda x: F.log(F.exp(x) + 1.0),
    "transpose": lambda x: F.transpose(x, (2, 0, 3, 1)),
    "reshape": lambda x: F.reshape(x, (4, -1)),
    "max_pool": F.max_pool2d,
    "avg_pool": F.avg_pool2d,
    "gap": F.global_avg_pool,
    "upsample": F.upsample_bilinear2x,
    "channel_max": lambda x: F.max(x, axis=1, keepdims=True),
    "mean": lambda x: F.mean(x, axis=(0, 2)),
    "power": lambda x: F.power(F.exp(x), 1.5),
    "roll": lambda x: F.roll(x, 1, axis=1),
    "getitem": lambda x: x[:, 1:3, ::2],
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    x = t64(np.random.default_rng(6).standard_normal((2, 3, 4, 4)))
    rep = gradcheck(lambda: UNARY[name](x), [("x", x)])
    assert rep.max_rel_error < GRAD_TOL, (name, rep)


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "matmul", "concat"])
def test_binary_gradients(op):
    rng = np.random.default_rng(7)
    a = t64(rng.standard_normal((2, 3, 4)))
    b = t64(rng.standard_normal((3, 4)) + (3.0 if op == "div" else 0.0))
    fns = {
        "add": lambda: a + b,
        "sub": lambda: a - b,
        "mul": lambda: a * b,
        "div": lambda: a / b,
        "matmul": lambda: a @ F.transpose(b, (1, 0)),
        "concat": lambda: F.concat([a, F.reshape(b, (1, 3, 4))], axis=0),
    }
    rep = gradcheck(fns[op], [("a", a), ("b", b)])
    assert rep.max_rel_error < GRAD_TOL, rep


def test_linear_and_causal_conv_gradients():
    rng = np.random.default_rng(8)
    x = t64(rng.standard_normal((2, 5, 3)))
    w = t64(rng.standard_normal((4, 3)))
    b = t64(rng.standard_normal(4))
    assert gradcheck(lambda: F.linear(x, w, b), [("x", x), ("w", w), ("b", b)]).max_rel_error < GRAD_TOL
    cw = t64(rng.standard_normal((3, 4)))
    cb = t64(rng.standard_normal(3))
    assert gradcheck(lambda: F.causal_conv1d(x, cw, cb), [("x", x), ("w", cw), ("b", cb)]).max_rel_error < GRAD_TOL


def test_causal_conv1d_naive():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((1, 6, 2))
    w = rng.standard_normal((2, 4))
    y = F.causal_conv1d(Tensor(x), Tensor(w)).data
    ref = np.zeros_like(x)
    for t in range(6):
        for k in range(4):
            s = t - 3 + k
            if s >= 0:
                ref[0, t] += w[:, k] * x[0, s]
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_upsample_matches_half_pixel_formula():
    x = np.random.default_rng(10).standard_normal((1, 1, 3, 4))
    y = F.upsample_bilinear2x(Tensor(x)).data

    def coord(o, n):
        s = max((o + 0.5) / 2 - 0.5, 0)
        i0 = min(int(np.floor(s)), n - 1)
        return i0, min(i0 + 1, n - 1), s - i0

    ref = np.zeros((6, 8))
    for i in range(6):
        a0, a1, la = coord(i, 3)
        for j in range(8):
            b0, b1, lb = coord(j, 4)
            ref[i, j] = (
                (1 - la) * (1 - lb) * x[0, 0, a0, b0]
                + (1 - la) * lb * x[0, 0, a0, b1]
                + la * (1 - lb) * x[0, 0, a1, b0]
                + la * lb * x[0, 0, a1, b1]
            )
    np.testing.assert_allclose(y[0, 0], ref, atol=1e-12)


def test_max_pool_naive():
    x = np.random.default_rng(11).standard_normal((2, 2, 4, 6))
    y = F.max_pool2d(Tensor(x)).data
    ref = np.array([[[[x[b, c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max() for j in range(3)] for i in range(2)] for c in range(2)] for b in range(2)])
    np.testing.assert_array_equal(y, ref)


class TestBatchNorm:
    def test_training_mode_normalizes(self):
        x = np.random.default_rng(12).standard_normal((4, 3, 5, 5)) * 3 + 1
        with default_dtype(np.float64):
            bn = BatchNorm2d(3)
        y = bn(Tensor(x)).data
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-10)
        np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-3)
        n = 4 * 25
        np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
        np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * n / (n - 1))

    def test_inference_mode_uses_running_stats(self):
        with default_dtype(np.float64):
            bn = BatchNorm2d(2)
        bn.running_mean[:] = [1.0, -1.0]
        bn.running_var[:] = [4.0, 9.0]
        bn.eval()
        x = np.random.default_rng(13).standard_normal((1, 2, 2, 2))
        y = bn(Tensor(x)).data
        ref = (x - np.array([1.0, -1.0])[None, :, None, None]) / np.sqrt(np.array([4.0, 9.0]) + 1e-5)[None, :, None, None]
        np.testing.assert_allclose(y, ref)

    @pytest.mark.parametrize("training", [True, False])
    def test_gradient(self, training):
        with default_dtype(np.float64):
            bn = BatchNorm2d(3)
        bn.train(training)
        rng = np.random.default_rng(14)
        bn.weight.data[:] = rng.standard_normal(3)
        x = t64(rng.standard_normal((2, 3, 3, 3)))
        rep = gradcheck(lambda: bn(x), [("x", x), ("w", bn.weight), ("b", bn.bias)])
        assert rep.max_rel_error < GRAD_TOL


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.sampled_from([1, 2, 3, 4, 6, 12]), st.integers(0, 2))
def test_chunk_concat_identity(batch, n, axis):
    shape = [batch, 12, 12]
    x = np.random.default_rng(0).standard_normal(shape)
    parts = F.chunk(Tensor(x), n, axis=axis) if shape[axis] % n == 0 else None
    if parts is None:
        return
    np.testing.assert_array_equal(F.concat(parts, axis=axis).data, x)


def test_slice_gradients_mix_with_dense_ones():
    rng = np.random.default_rng(3)
    x = t64(rng.standard_normal((3, 8)))
    w = t64(rng.standard_normal(8))

    def fn():
        a, b = F.chunk(x, 2, axis=-1)
        # x reaches the loss through two slices, one slice reused, and directly
        return (a * b).sum() + (a * a).sum() + (x * w).sum() + F.split(x, [3, 5])[1].sum()

    rep = gradcheck(fn, [("x", x), ("w", w)])
    assert rep.max_rel_error < GRAD_TOL


def test_backward_leaves_shared_gradients_untouched():
    # add returns its incoming gradient object to both parents; neither may be updated in place
    x = t64(np.ones(4))
    y = x + x
    z = F.getitem(y, slice(0, 2)).sum() + y.sum()
    z.backward()
    np.testing.assert_array_equal(x.grad, [4.0, 4.0, 2.0, 2.0])


def test_forward_rejects_non_finite():
    with pytest.raises(NumericError), np.errstate(invalid="ignore"):
        F.log(Tensor(np.array([-1.0, 1.0])))


@pytest.mark.parametrize("op", ["sigmoid", "gelu", "silu", "softplus", "softmax"])
def test_finite_on_large_inputs(op):
    x = Tensor(np.linspace(-1e3, 1e3, 41))
    fn = {"sigmoid": F.sigmoid, "gelu": F.gelu, "silu": F.silu, "softplus": F.softplus, "softmax": F.softmax}[op]
    assert np.all(np.isfinite(fn(x).data))


def test_parameter_defaults_to_float32():
    assert Parameter(np.zeros(3)).dtype == np.float32


def test_scalar_index_keeps_zero_dim():
    w = Tensor(np.arange(3.0), requires_grad=True)
    s = w[1]
    assert s.shape == ()
    (s * Tensor(np.ones((2, 2)))).sum().backward()
    np.testing.assert_array_equal(w.grad, [0.0, 4.0, 0.0])


@pytest.mark.parametrize("act", [F.sigmoid, F.silu, F.gelu, F.softplus, F.relu, F.exp])
def test_activations_keep_float32(act):
    x = Tensor(np.linspace(-3, 3, 12, dtype=np.float32), requires_grad=True)
    y = act(x)
    y.sum().backward()
    assert y.dtype == np.float32 and x.grad.dtype == np.float32


def test_sigmoid_extremes_without_warnings():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        out = F.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])
    sp = F.softplus(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
    np.testing.assert_allclose(sp, [0.0, np.log(2.0), 1000.0])
