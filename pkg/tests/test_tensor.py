import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from toflow.errors import ConfigurationError, ShapeError
from toflow.gradcheck import check_gradients, check_joint
from toflow.optim import Adam, AdamState, adam_step
from toflow.tensor import (
    Tensor,
    backward,
    concat,
    conv2d,
    l1_loss,
    relu,
    resize_bilinear,
    sigmoid,
    spatial_norm,
    sum_all,
)


def leaf(a, dtype=np.float64):
    return Tensor(np.asarray(a, dtype=dtype), requires_grad=True)


def conv_oracle(x, w, b):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((cout, h, wd))
    for o in range(cout):
        for i in range(h):
            for j in range(wd):
                acc = b[o]
                for c in range(cin):
                    for u in range(kh):
                        for v in range(kw):
                            acc += w[o, c, u, v] * xp[c, i + u, j + v]
                out[o, i, j] = acc
    return out


# -- conv2d ------------------------------------------------------------------


def test_conv_scaling_identity():
    out = conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, np.full((1, 3, 3), 2.0))


def test_conv_impulse_response():
    x = np.zeros((1, 5, 5))
    x[0, 2, 2] = 1.0
    k = np.arange(9.0).reshape(1, 1, 3, 3)
    out = conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(1))).data
    # cross-correlation: the impulse response is the kernel flipped
    np.testing.assert_allclose(out[0, 1:4, 1:4], k[0, 0, ::-1, ::-1])
    assert np.count_nonzero(out) == 8


def test_conv_matches_nested_loops():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=(2, 4, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    got = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, conv_oracle(x, w, b), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(
    cin=st.integers(1, 3),
    cout=st.integers(1, 3),
    k=st.sampled_from([1, 3, 5]),
    h=st.integers(3, 6),
    w=st.integers(3, 6),
    seed=st.integers(0, 2**16),
)
def test_conv_matches_nested_loops_property(cin, cout, k, h, w, seed):
    rng = np.random.default_rng(seed)
    x, wt, b = rng.normal(size=(cin, h, w)), rng.normal(size=(cout, cin, k, k)), rng.normal(size=cout)
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(wt), Tensor(b)).data, conv_oracle(x, wt, b), atol=1e-9)


def test_conv_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ConfigurationError):
        conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))


def test_conv_f32_gradients_fd():
    # l1(conv) is piecewise linear, so a wide step only costs accuracy at kinks; the
    # scaled target keeps residuals far from zero
    rng = np.random.default_rng(3)
    x = leaf(rng.normal(size=(2, 5, 5)), np.float32)
    w = leaf(rng.normal(size=(2, 2, 3, 3)), np.float32)
    b = leaf(rng.normal(size=2), np.float32)
    t = Tensor((rng.normal(size=(2, 5, 5)) * 5).astype(np.float32))
    res = check_gradients(lambda: l1_loss(conv2d(x, w, b), t), {"x": x, "w": w, "b": b}, h=5e-2, samples=20)
    assert all(r.max_rel_err < 1e-3 for r in res.values()), res


def test_conv_f64_gradients_fd():
    rng = np.random.default_rng(4)
    x, w, b = leaf(rng.normal(size=(2, 5, 5))), leaf(rng.normal(size=(3, 2, 3, 3))), leaf(rng.normal(size=3))
    t = Tensor(rng.normal(size=(3, 5, 5)) * 5)
    res = check_gradients(lambda: l1_loss(conv2d(x, w, b), t), {"x": x, "w": w, "b": b}, h=1e-4)
    assert all(r.max_rel_err < 1e-6 for r in res.values()), res


# -- relu / sigmoid ----------------------------------------------------------


def test_relu_values():
    np.testing.assert_array_equal(relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data, [0.0, 0.0, 2.0])


def test_relu_all_negative_blocks_gradient():
    x = leaf(-np.abs(np.random.default_rng(0).normal(size=(2, 3, 3))) - 0.1)
    y = relu(x)
    assert not y.data.any()
    backward(sum_all(y))
    assert not x.grad.any()


def test_relu_gradient_is_indicator():
    rng = np.random.default_rng(1)
    x = leaf(rng.normal(size=(3, 4, 4)))
    x.data[np.abs(x.data) < 0.01] = 0.5
    backward(sum_all(relu(x)))
    np.testing.assert_array_equal(x.grad, (x.data > 0).astype(float))
    res = check_gradients(lambda: sum_all(relu(x)), {"x": x}, h=1e-4)
    assert res["x"].max_rel_err < 1e-6


def test_sigmoid_extremes_are_finite():
    y = sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0])))
    np.testing.assert_allclose(y.data, [0.0, 0.5, 1.0])


# -- spatial_norm ------------------------------------------------------------


def test_spatial_norm_constant_gives_beta():
    x = Tensor(np.full((2, 4, 4), 3.0))
    out = spatial_norm(x, Tensor(np.array([2.0, 3.0])), Tensor(np.array([0.5, -1.0])))
    np.testing.assert_allclose(out.data[0], 0.5)
    np.testing.assert_allclose(out.data[1], -1.0)


def test_spatial_norm_single_pixel_defined():
    out = spatial_norm(Tensor(np.array([[[4.0]]])), Tensor(np.ones(1)), Tensor(np.array([0.25])))
    assert out.data.item() == 0.25


def test_spatial_norm_standardised_values_fixed():
    x = np.array([[[-1.0, 1.0], [1.0, -1.0]]])
    out = spatial_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), epsilon=1e-12)
    np.testing.assert_allclose(out.data, x, atol=1e-9)


def test_spatial_norm_statistics():
    x = np.random.default_rng(2).normal(3.0, 2.0, size=(2, 8, 8))
    out = spatial_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
    assert np.abs(out.mean(axis=(1, 2))).max() < 1e-5
    assert np.abs(out.var(axis=(1, 2)) - 1.0).max() < 1e-4


# -- resize ------------------------------------------------------------------


def test_resize_ramp_upsample():
    x = Tensor(np.array([[[0.0, 1.0], [0.0, 1.0]]]))
    out = resize_bilinear(x, 2.0).data
    for row in out[0]:
        np.testing.assert_allclose(row, [0.0, 0.25, 0.75, 1.0])


@settings(max_examples=30, deadline=None)
@given(value=st.floats(-5, 5), scale=st.sampled_from([0.25, 0.5, 1.5, 2.0, 3.0]))
def test_resize_constant_any_scale(value, scale):
    out = resize_bilinear(Tensor(np.full((2, 8, 8), value)), scale).data
    np.testing.assert_allclose(out, value, atol=1e-12)


def test_resize_downscale_gradient_fd():
    x = leaf(np.random.default_rng(5).normal(size=(1, 8, 8)))
    t = Tensor(np.random.default_rng(6).normal(size=(1, 4, 4)))
    res = check_gradients(lambda: l1_loss(resize_bilinear(x, 0.5), t), {"x": x})
    assert res["x"].max_rel_err < 1e-3


def test_resize_empty_output_rejected():
    with pytest.raises(ConfigurationError):
        resize_bilinear(Tensor(np.zeros((1, 2, 2))), 0.1)


# -- l1 ----------------------------------------------------------------------


def test_l1_values():
    a = np.random.default_rng(0).random((3, 4, 4))
    assert l1_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert l1_loss(Tensor(a + 0.5), Tensor(a)).item() == pytest.approx(0.5, abs=1e-12)


def test_l1_matches_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 5))
    acc = 0.0
    for v in np.nditer(a - b):
        acc += abs(float(v))
    assert abs(l1_loss(Tensor(a), Tensor(b)).item() - acc / a.size) < 1e-7


def test_l1_shape_mismatch():
    with pytest.raises(ShapeError):
        l1_loss(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 2, 3))))


# -- backward ----------------------------------------------------------------


def test_backward_sum_gives_ones():
    w = leaf(np.random.default_rng(0).normal(size=(2, 3)))
    backward(sum_all(w))
    np.testing.assert_array_equal(w.grad, np.ones((2, 3)))


def test_backward_accumulates_reuse():
    x = leaf(np.array([1.0, -2.0]))
    backward(sum_all(x + x))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_diamond_graph():
    x = leaf(np.array([3.0]))
    y = x * x
    backward(sum_all(y * x + y))
    assert x.grad[0] == pytest.approx(3 * 9 + 2 * 3)


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        backward(leaf(np.ones(3)) * 2.0)


def test_backward_skips_constants():
    c = Tensor(np.ones(3))
    x = leaf(np.ones(3))
    backward(sum_all(concat([c, x])))
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, np.ones(3))


# -- adam --------------------------------------------------------------------


def test_adam_zero_grad_no_decay_is_noop():
    p = {"w": leaf(np.array([1.5, -2.0]))}
    st_ = AdamState(lr=1e-3, weight_decay=0.0)
    adam_step(p, {"w": np.zeros(2)}, st_)
    np.testing.assert_array_equal(p["w"].data, [1.5, -2.0])


def test_adam_first_step_magnitude():
    p = {"w": leaf(np.array([0.0]))}
    adam_step(p, {"w": np.array([1.0])}, AdamState(lr=1e-4, weight_decay=0.0))
    assert p["w"].data[0] == pytest.approx(-1e-4, rel=1e-6)


def test_adam_rejects_non_finite_naming_param():
    p = {"head.0.weight": leaf(np.zeros(2))}
    with pytest.raises(FloatingPointError, match="head.0.weight"):
        adam_step(p, {"head.0.weight": np.array([np.nan, 0.0])}, AdamState())


def _adam_run(seed):
    rng = np.random.default_rng(seed)
    w = leaf(rng.normal(size=(3, 3)), np.float32)
    target = Tensor(rng.normal(size=(3, 3)).astype(np.float32))
    opt = Adam({"w": w}, lr=1e-2)
    for _ in range(100):
        opt.zero_grad()
        backward(l1_loss(w, target))
        opt.step()
    return w.data.copy()


def test_adam_deterministic():
    np.testing.assert_array_equal(_adam_run(7), _adam_run(7))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4,), elements=st.floats(-10, 10)), st.floats(1e-5, 1e-2))
def test_adam_first_step_bounded_by_lr(g, lr):
    p = {"w": leaf(np.zeros(4))}
    adam_step(p, {"w": g}, AdamState(lr=lr, weight_decay=0.0))
    assert np.all(np.abs(p["w"].data) <= lr * (1 + 1e-9))


def test_joint_check_samples_across_tensors():
    a, b = leaf(np.ones(3)), leaf(np.ones(200))
    res = check_joint(lambda: sum_all(a * a) + sum_all(b * b), {"a": a, "b": b}, samples=100)
    assert res.samples == 100 and res.max_rel_err < 1e-8
