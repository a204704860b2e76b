import numpy as np
import pytest

from amfm_faces.errors import ParameterError
from amfm_faces.nets import layers as L


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(a)) + np.max(np.abs(b)))


def test_conv_shapes_and_zero():
    x = np.ones((50, 50, 1))
    out, _ = L.conv2d_forward(x, np.zeros((6, 5, 5, 1)), np.zeros(6))
    assert out.shape == (46, 46, 6) and not out.any()
    with pytest.raises(ParameterError):
        L.conv2d_forward(x, np.zeros((6, 5, 5, 2)), np.zeros(6))
    with pytest.raises(ParameterError):
        L.conv2d_forward(np.ones((2, 4, 4, 1)), np.zeros((1, 5, 5, 1)), np.zeros(1))


def test_conv_matches_loop(rng):
    x = rng.standard_normal((2, 9, 11, 3))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out, _ = L.conv2d_forward(x, w, b, stride=2)
    ref = np.zeros((2, 4, 5, 4))
    for n in range(2):
        for i in range(4):
            for j in range(5):
                patch = x[n, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
                ref[n, i, j] = np.tensordot(w, patch, axes=([1, 2, 3], [0, 1, 2])) + b
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("stride,cin", [(1, 1), (1, 3), (2, 2)])
def test_conv_gradients(rng, stride, cin):
    x = rng.standard_normal((2, 7, 7, cin))
    w = rng.standard_normal((3, 3, 3, cin))
    b = rng.standard_normal(3)
    out, cache = L.conv2d_forward(x, w, b, stride)
    g = rng.standard_normal(out.shape)
    dx, dw, db = L.conv2d_backward(g, cache)

    def f():
        return float(np.sum(L.conv2d_forward(x, w, b, stride)[0] * g))

    assert rel_err(dx, numeric_grad(f, x)) < 1e-7
    assert rel_err(dw, numeric_grad(f, w)) < 1e-7
    assert rel_err(db, numeric_grad(f, b)) < 1e-7


def test_pool_examples():
    out, _ = L.pool_forward(np.zeros((46, 46, 6)), "max", 5, 5)
    assert out.shape == (9, 9, 6)
    out, _ = L.pool_forward(np.full((2, 10, 10, 3), 4.0), "max", 2, 2)
    np.testing.assert_array_equal(out, 4.0)
    out, _ = L.pool_forward(np.ones((7, 9, 2)), "avg", 3, 2)
    np.testing.assert_allclose(out, 1.0)
    with pytest.raises(ParameterError):
        L.pool_forward(np.ones((4, 4, 1)), "max", 5, 5)
    with pytest.raises(ParameterError):
        L.pool_forward(np.ones((4, 4, 1)), "median", 2, 2)


@pytest.mark.parametrize("kernel,stride", [(2, 2), (3, 2), (5, 5)])
def test_max_pool_tie_goes_to_first(kernel, stride):
    x = np.ones((1, 2 * kernel + 1, 2 * kernel + 1, 1))
    out, cache = L.pool_forward(x, "max", kernel, stride)
    dx = L.pool_backward(np.ones_like(out), cache)
    # each window routes its gradient to its top-left element
    for i in range(out.shape[1]):
        for j in range(out.shape[2]):
            assert dx[0, i * stride, j * stride, 0] >= 1
    assert dx.sum() == out.size


@pytest.mark.parametrize("mode", ["max", "avg"])
@pytest.mark.parametrize("kernel,stride", [(2, 2), (3, 2), (5, 5)])
def test_pool_gradients(rng, mode, kernel, stride):
    h = kernel + 2 * stride
    x = rng.standard_normal((2, h, h, 3))
    out, cache = L.pool_forward(x, mode, kernel, stride)
    g = rng.standard_normal(out.shape)
    dx = L.pool_backward(g, cache)

    def f():
        return float(np.sum(L.pool_forward(x, mode, kernel, stride)[0] * g))

    assert rel_err(dx, numeric_grad(f, x)) < 1e-7


def test_dense_examples_and_gradients(rng):
    x = rng.standard_normal((4, 5))
    out, _ = L.dense_forward(x, np.eye(5), np.zeros(5))
    np.testing.assert_array_equal(out, x)
    out, _ = L.dense_forward(np.zeros(5), rng.standard_normal((3, 5)), np.arange(3.0))
    np.testing.assert_array_equal(out, [0.0, 1.0, 2.0])
    w, b = rng.standard_normal((3, 5)), rng.standard_normal(3)
    out, cache = L.dense_forward(x, w, b)
    g = rng.standard_normal(out.shape)
    dx, dw, db = L.dense_backward(g, cache)

    def f():
        return float(np.sum(L.dense_forward(x, w, b)[0] * g))

    for analytic, var in ((dx, x), (dw, w), (db, b)):
        assert rel_err(analytic, numeric_grad(f, var)) < 1e-8
    with pytest.raises(ParameterError):
        L.dense_forward(np.zeros((2, 4)), w, b)


def test_activation_values():
    assert L.selu(0.0) == 0.0
    assert L.sigmoid(0.0) == 0.5
    assert L.tanh_grad(0.0) == 1.0
    assert L.selu(1.0) == pytest.approx(1.0507009873554805)
    assert L.selu(-50.0) == pytest.approx(-1.0507009873554805 * 1.6732632423543772)
    s = L.sigmoid(np.array([-800.0, 800.0]))
    assert np.isfinite(s).all() and s[0] == 0.0 and s[1] == 1.0
    assert L.selu(np.ones(3, dtype=np.float32)).dtype == np.float32


@pytest.mark.parametrize("name", sorted(L.ACTIVATIONS))
def test_activation_gradients(rng, name):
    f, df = L.ACTIVATIONS[name]
    x = rng.standard_normal(50) * 3
    x = x[np.abs(x) > 1e-3]  # stay off the selu kink
    num = (f(x + 1e-6) - f(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(df(x), num, rtol=1e-6, atol=1e-9)


def test_mse_loss(rng):
    p = rng.standard_normal((4, 3))
    assert L.mse_loss(p, p)[0] == 0.0
    assert L.mse_loss(p + 0.5, p)[0] == pytest.approx(0.25)
    t = rng.standard_normal((4, 3))
    _, grad = L.mse_loss(p, t)
    num = numeric_grad(lambda: L.mse_loss(p, t)[0], p)
    assert rel_err(grad, num) < 1e-6
    with pytest.raises(ParameterError):
        L.mse_loss(np.zeros(3), np.zeros(4))
