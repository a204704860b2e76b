"""Tensor kernels with analytic gradients.

All image tensors are channel-last, ``(N, H, W, C)``; a single sample
``(H, W, C)`` is accepted and returned without the batch axis.  Convolution
weights are ``(maps, k, k, C_in)`` and use the cross-correlation convention
with valid padding.  Dense weights are ``(units, n_in)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ParameterError

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ParameterError(f"expected (N, H, W, C) or (H, W, C), got shape {x.shape}")
    return x, False


def conv_output_size(n, k, stride):
    if k > n:
        raise ParameterError(f"kernel {k} larger than input {n}")
    if (n - k) % stride:
        raise ParameterError(f"(input {n} - kernel {k}) is not divisible by stride {stride}")
    return (n - k) // stride + 1


def _patches(x, k, stride):
    """Channel-first im2col: ``(N, k*k*C, Ho*Wo)`` in the weight layout.

    Each kernel offset copies a contiguous image slab, which is far cheaper
    than materializing a transposed sliding-window view.
    """
    n, h, w, c = x.shape
    ho, wo = conv_output_size(h, k, stride), conv_output_size(w, k, stride)
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    cols = np.empty((n, k, k, c, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xc[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, k * k * c, ho * wo), (ho, wo)


def conv2d_forward(x, weights, bias, stride=1):
    """Return ``(output, cache)``; output is ``(N, Ho, Wo, maps)``."""
    x, single = _batched(x)
    maps, k, k2, cin = weights.shape
    if k != k2 or x.shape[3] != cin or bias.shape != (maps,):
        raise ParameterError(
            f"conv shapes disagree: input {x.shape}, weights {weights.shape}, bias {bias.shape}"
        )
    cols, (ho, wo) = _patches(x, k, stride)
    out = np.matmul(weights.reshape(maps, -1), cols)  # (N, maps, Ho*Wo)
    out = out.transpose(0, 2, 1).reshape(x.shape[0], ho, wo, maps) + bias
    cache = (x.shape, cols, weights, stride, single)
    return (out[0] if single else out), cache


def conv2d_backward(dout, cache, need_input_grad=True):
    """Gradients ``(d_input, d_weights, d_bias)``; ``d_input`` is None if not requested."""
    xshape, cols, weights, stride, single = cache
    maps, k, _, cin = weights.shape
    dout = np.asarray(dout)
    if single:
        dout = dout[None]
    n, ho, wo, _ = dout.shape
    d = dout.reshape(n, ho * wo, maps).transpose(0, 2, 1)  # (N, maps, Ho*Wo)
    dw = np.matmul(d, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weights.shape)
    db = dout.reshape(-1, maps).sum(axis=0)
    dx = None
    if need_input_grad:
        dcols = np.matmul(weights.reshape(maps, -1).T, d).reshape(n, k, k, cin, ho, wo)
        dxc = np.zeros((n, cin, xshape[1], xshape[2]), dtype=dcols.dtype)
        for i in range(k):
            for j in range(k):
                dxc[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
        dx = dxc.transpose(0, 2, 3, 1)
        if single:
            dx = dx[0]
    return dx, dw, db


def pool_output_size(n, k, stride):
    if k > n:
        raise ParameterError(f"pool kernel {k} larger than input {n}")
    return (n - k) // stride + 1


def pool_forward(x, kind="max", kernel=2, stride=2):
    """Max or average pooling, floor output size, no padding."""
    x, single = _batched(x)
    n, h, w, c = x.shape
    ho, wo = pool_output_size(h, kernel, stride), pool_output_size(w, kernel, stride)
    if kind not in ("max", "avg"):
        raise ParameterError(f"unknown pooling kind {kind!r}")
    if stride == kernel:
        # non-overlapping windows: window offset on the leading axis, row-major
        kk = kernel * kernel
        win = x[:, : ho * kernel, : wo * kernel].reshape(n, ho, kernel, wo, kernel, c)
        win = win.transpose(2, 4, 0, 1, 3, 5).reshape(kk, n, ho, wo, c)
        if kind == "max":
            # running comparison; strict ">" keeps the first maximum
            out = win[0].copy()
            idx = np.zeros(out.shape, dtype=np.intp)
            for t in range(1, kk):
                better = win[t] > out
                np.copyto(out, win[t], where=better)
                idx[better] = t
        else:
            idx = None
            out = win.mean(axis=0)
        cache = (x.shape, kind, kernel, stride, idx, single)
        return (out[0] if single else out), cache
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    win = win[:, :ho, :wo].reshape(n, ho, wo, c, kernel * kernel)
    if kind == "max":
        idx = np.argmax(win, axis=-1)  # first maximum in row-major window order
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    elif kind == "avg":
        idx = None
        out = win.mean(axis=-1)
    else:
        raise ParameterError(f"unknown pooling kind {kind!r}")
    cache = (x.shape, kind, kernel, stride, idx, single)
    return (out[0] if single else out), cache


def pool_backward(dout, cache):
    xshape, kind, kernel, stride, idx, single = cache
    dout = np.asarray(dout)
    if single:
        dout = dout[None]
    n, ho, wo, c = dout.shape
    if stride == kernel:
        kk = kernel * kernel
        if kind == "max":
            spread = np.where(idx[None] == np.arange(kk).reshape(kk, 1, 1, 1, 1), dout[None], 0)
            spread = spread.astype(dout.dtype, copy=False)
        else:
            spread = np.broadcast_to(dout[None] / kk, (kk,) + dout.shape)
        spread = spread.reshape(kernel, kernel, n, ho, wo, c).transpose(2, 3, 0, 4, 1, 5)
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, : ho * kernel, : wo * kernel] = spread.reshape(n, ho * kernel, wo * kernel, c)
        return dx[0] if single else dx
    dx = np.zeros(xshape, dtype=dout.dtype)
    for i in range(kernel):
        for j in range(kernel):
            if kind == "max":
                part = np.where(idx == i * kernel + j, dout, 0.0)
            else:
                part = dout / (kernel * kernel)
            dx[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += part
    return dx[0] if single else dx


def dense_forward(x, weights, bias):
    x = np.asarray(x)
    single = x.ndim == 1
    x2 = x[None] if single else x
    if x2.ndim != 2 or x2.shape[1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ParameterError(
            f"dense shapes disagree: input {x.shape}, weights {weights.shape}, bias {bias.shape}"
        )
    out = x2 @ weights.T + bias
    return (out[0] if single else out), (x2, weights, single)


def dense_backward(dout, cache, need_input_grad=True):
    x2, weights, single = cache
    d = np.asarray(dout)
    d = d[None] if single else d
    dw = d.T @ x2
    db = d.sum(axis=0)
    dx = None
    if need_input_grad:
        dx = d @ weights
        if single:
            dx = dx[0]
    return dx, dw, db


def _float(x):
    return x if isinstance(x, np.ndarray) and x.dtype.kind == "f" else np.asarray(x, dtype=np.float64)


def selu(x):
    x = _float(x)
    neg = SELU_ALPHA * np.expm1(np.minimum(x, 0))
    return (SELU_LAMBDA * np.where(x > 0, x, neg)).astype(x.dtype, copy=False)


def selu_grad(x):
    x = _float(x)
    neg = SELU_ALPHA * np.exp(np.minimum(x, 0))
    return (SELU_LAMBDA * np.where(x > 0, 1, neg)).astype(x.dtype, copy=False)


def sigmoid(x):
    x = _float(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x):
    return np.tanh(x)


def tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def identity(x):
    return np.asarray(x)


def identity_grad(x):
    return np.ones_like(_float(x))


ACTIVATIONS = {
    "selu": (selu, selu_grad),
    "sigmoid": (sigmoid, sigmoid_grad),
    "tanh": (tanh, tanh_grad),
    "linear": (identity, identity_grad),
}


def mse_loss(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``.

    The value is accumulated in float64; the gradient keeps ``pred``'s dtype.
    """
    pred = _float(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ParameterError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target.astype(pred.dtype)
    d64 = diff.astype(np.float64)
    return float(np.mean(d64 * d64)), (2.0 / diff.size) * diff
