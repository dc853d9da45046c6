import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridqrl import nn
from hybridqrl.errors import ArgumentError, StateError
from hybridqrl.gradcheck import central_difference, naive_conv, relative_error


@pytest.fixture(autouse=True)
def _f64():
    with nn.float64_mode():
        yield


def fd_conv_grads(x, w, b, stride, activation, upstream):
    def loss_of(kind):
        def f(v):
            args = {"x": x, "w": w, "b": b}
            args[kind] = v
            out, _ = nn.conv2d_forward(args["x"], args["w"], args["b"], stride, activation)
            return np.array([np.sum(out * upstream)])

        return f

    return [central_difference(loss_of(k), v)[0] for k, v in (("x", x), ("w", w), ("b", b))]


def test_reference_stack_shapes():
    rng = np.random.default_rng(0)
    x = rng.random((1, 84, 84, 4))
    shapes = []
    for spec in nn.REFERENCE_CONV_STACK:
        layer = nn.Conv2D(spec, rng=rng)
        x = layer.forward(x)
        shapes.append(x.shape[1:])
    assert shapes == [(20, 20, 32), (9, 9, 64), (7, 7, 64)]
    assert x.reshape(1, -1).shape[1] == 3136


def test_zero_weights_zero_output():
    x = np.random.default_rng(1).normal(size=(2, 9, 9, 3))
    out, cache = nn.conv2d_forward(x, np.zeros((3, 3, 3, 5)), np.zeros(5), 2, "linear")
    assert not out.any()
    assert not cache["pre"].any()


def test_one_by_one_identity():
    x = np.random.default_rng(2).normal(size=(3, 6, 5, 1))
    out, _ = nn.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1), 1, "linear")
    assert np.array_equal(out, x)


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 11, 10, 3))
    w = rng.normal(size=(4, 4, 3, 5))
    b = rng.normal(size=5)
    out, _ = nn.conv2d_forward(x, w, b, 2, "linear")
    assert np.abs(out - naive_conv(x, w, b, 2)).max() <= 1e-12


def test_channel_mismatch():
    with pytest.raises(ArgumentError):
        nn.conv2d_forward(np.zeros((1, 8, 8, 2)), np.zeros((3, 3, 4, 1)), np.zeros(1), 1)
    with pytest.raises(ArgumentError):
        nn.dense_forward(np.zeros((1, 3)), np.zeros((4, 2)), np.zeros(2))


@pytest.mark.parametrize("activation", ["linear", "relu", "tanh_pi"])
def test_conv_backward_finite_difference(activation):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 8, 8, 2))
    w = rng.normal(0, 0.3, size=(3, 3, 2, 3))
    b = rng.normal(0, 0.1, size=3)
    up = rng.normal(size=(1, 6, 6, 3))
    _, cache = nn.conv2d_forward(x, w, b, 1, activation)
    gx, gw, gb = nn.conv2d_backward(up, cache)
    fx, fw, fb = fd_conv_grads(x, w, b, 1, activation, up)
    # floor 1e-6 keeps the relative metric meaningful near exact zeros (ReLU kinks aside)
    for a, ref in ((gx, fx), (gw, fw), (gb, fb)):
        assert relative_error(a, ref.reshape(a.shape)) <= 1e-4


def test_conv_backward_strided():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 9, 9, 2))
    w = rng.normal(0, 0.3, size=(3, 3, 2, 2))
    b = np.zeros(2)
    up = rng.normal(size=(2, 4, 4, 2))
    _, cache = nn.conv2d_forward(x, w, b, 2, "linear")
    gx, gw, gb = nn.conv2d_backward(up, cache)
    fx, fw, fb = fd_conv_grads(x, w, b, 2, "linear", up)
    assert relative_error(gx, fx.reshape(gx.shape)) <= 1e-4
    assert relative_error(gw, fw.reshape(gw.shape)) <= 1e-4


def test_conv_backward_zero_and_linear_upstream():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 8, 8, 2))
    _, cache = nn.conv2d_forward(x, rng.normal(size=(3, 3, 2, 3)), np.zeros(3), 1, "relu")
    zeros = nn.conv2d_backward(np.zeros((1, 6, 6, 3)), cache)
    assert all(not g.any() for g in zeros)
    up = rng.normal(size=(1, 6, 6, 3))
    single = nn.conv2d_backward(up, cache)
    double = nn.conv2d_backward(2 * up, cache)
    for s, d in zip(single, double):
        assert np.array_equal(2 * s, d)


def test_missing_cache_is_state_error():
    with pytest.raises(StateError):
        nn.Conv2D(nn.ConvLayerSpec(1, 1, 3, 1)).backward(np.zeros((1, 1, 1, 1)))
    with pytest.raises(StateError):
        nn.Dense(nn.DenseLayerSpec(2, 2)).backward(np.zeros((1, 2)))


def test_dense_parameter_count():
    assert nn.DenseLayerSpec(16, 512, "relu").n_params == 8704


def test_dense_identity():
    x = np.random.default_rng(7).normal(size=(4, 6))
    y, _ = nn.dense_forward(x, np.eye(6), np.zeros(6), "linear")
    assert np.array_equal(y, x)


@pytest.mark.parametrize("activation", ["linear", "relu", "tanh_pi"])
def test_dense_backward_finite_difference(activation):
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 5))
    w = rng.normal(0, 0.5, size=(5, 4))
    b = rng.normal(0, 0.1, size=4)
    up = rng.normal(size=(3, 4))
    _, cache = nn.dense_forward(x, w, b, activation)
    gx, gw, gb = nn.dense_backward(up, cache)

    def f_x(v):
        return np.array([np.sum(nn.dense_forward(v, w, b, activation)[0] * up)])

    def f_w(v):
        return np.array([np.sum(nn.dense_forward(x, v, b, activation)[0] * up)])

    assert relative_error(gx, central_difference(f_x, x)[0].reshape(gx.shape)) <= 1e-4
    assert relative_error(gw, central_difference(f_w, w)[0].reshape(gw.shape)) <= 1e-4


def test_tanh_pi_examples():
    assert nn.tanh_pi(0.0) == 0.0
    assert nn.tanh_pi(30.0) == np.nextafter(np.pi, 0) == -nn.tanh_pi(-1e300)
    assert np.pi - nn.tanh_pi(10.0) < 1e-6
    h = 1e-6
    fd = (nn.tanh_pi(h) - nn.tanh_pi(-h)) / (2 * h)
    assert nn.tanh_pi_grad(0.0) == pytest.approx(np.pi, abs=1e-12)
    assert abs(fd - np.pi) <= 1e-8


@given(st.floats(allow_nan=False))
def test_tanh_pi_range(x):
    assert abs(nn.tanh_pi(x)) < np.pi
    y32 = nn.tanh_pi(np.array([min(max(x, -1e30), 1e30)], dtype=np.float32))
    assert y32.dtype == np.float32 and np.abs(y32[0]) < np.pi


def test_relu_mask():
    rng = np.random.default_rng(9)
    pre = rng.normal(size=(50,))
    g = nn.activation_backward(np.ones(50), pre, "relu")
    assert np.array_equal(g == 0, pre <= 0)
    assert np.all(g[pre < 0] == 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 120), st.integers(1, 12), st.integers(1, 6))
def test_conv_output_size_formula(size, kernel, stride):
    if kernel > size:
        with pytest.raises(ArgumentError):
            nn.conv_output_size(size, kernel, stride)
        return
    out = nn.conv_output_size(size, kernel, stride)
    assert out == (size - kernel) // stride + 1
    # the last window fits and one more would not
    assert (out - 1) * stride + kernel <= size < out * stride + kernel


def test_adam_first_step_standard_formula():
    g, alpha = 0.5, 0.1
    m = 0.1 * g
    v = 0.001 * g * g
    expected = 1.0 - alpha * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    p = np.array([1.0])
    state = nn.AdamState.zeros_like([p])
    nn.adam_step([p], [np.array([g])], state, alpha)
    assert p[0] == pytest.approx(expected, abs=1e-15)
    assert p[0] - 1.0 == pytest.approx(-0.1, abs=1e-7)


def test_adam_hand_recursion_several_steps():
    rng = np.random.default_rng(10)
    grads = rng.normal(size=(6, 3))
    p = np.zeros(3)
    state = nn.AdamState.zeros_like([p])
    m = v = np.zeros(3)
    ref = np.zeros(3)
    for t, g in enumerate(grads, start=1):
        nn.adam_step([p], [g.copy()], state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.abs(p - ref).max() <= 1e-12


def test_adam_zero_gradient_and_zero_lr():
    p = np.random.default_rng(11).normal(size=7)
    before = p.copy()
    state = nn.AdamState.zeros_like([p])
    for _ in range(5):
        nn.adam_step([p], [np.zeros(7)], state, 0.1)
    assert np.array_equal(p, before)
    state = nn.AdamState.zeros_like([p])
    for _ in range(5):
        nn.adam_step([p], [np.random.default_rng(_).normal(size=7)], state, 0.0)
    assert np.array_equal(p, before)


def test_adam_group_rates_scale_linearly():
    a, b = np.zeros(4), np.zeros(4)
    g = np.random.default_rng(12).normal(size=4)
    opt = nn.Adam({"slow": [a], "fast": [b]}, {"slow": 2.5e-4, "fast": 2.5e-2})
    opt.step({"slow": [g.copy()], "fast": [g.copy()]})
    assert np.allclose(b, 100 * a, rtol=1e-12, atol=0)


def test_adam_requires_rates_and_shapes():
    with pytest.raises(ArgumentError):
        nn.Adam({"x": [np.zeros(2)]}, {})
    with pytest.raises(ArgumentError):
        nn.adam_step([np.zeros(2)], [np.zeros(3)], nn.AdamState.zeros_like([np.zeros(2)]), 0.1)


def test_default_dtype_is_float32_outside_float64_mode():
    assert nn.default_dtype() is np.float64
    nn.set_default_dtype(np.float32)
    try:
        assert nn.Dense(nn.DenseLayerSpec(2, 2), rng=0).params["W"].dtype == np.float32
    finally:
        nn.set_default_dtype(np.float64)
