"""Differentiable ops used by the encoder-decoder network."""

from __future__ import annotations

import contextlib

import numpy as np

from .tensor import Tensor, as_tensor, make_op

_GUIDED_RELU = False


@contextlib.contextmanager
def guided_relu():
    """Within this block, ReLU backward also drops negative incoming gradients."""
    global _GUIDED_RELU
    prev = _GUIDED_RELU
    _GUIDED_RELU = True
    try:
        yield
    finally:
        _GUIDED_RELU = prev


# elementwise ---------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        if _GUIDED_RELU:
            return (g * (mask & (g > 0)),)
        return (g * mask,)

    return make_op(np.where(mask, x.data, 0.0).astype(x.dtype), (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def log(x: Tensor) -> Tensor:
    a = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a)
    return make_op(out, (x,), lambda g: (g / a,), "log")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    a = x.data
    inside = (a >= lo) & (a <= hi)
    return make_op(np.clip(a, lo, hi), (x,), lambda g: (g * inside,), "clip")


# structural ----------------------------------------------------------------


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_op(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def flip(x: Tensor, axis: int) -> Tensor:
    return make_op(np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis),), "flip")


# dense layers --------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (batch, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x @ weight.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias
    return out


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor):
    """One LSTM step.  Gate order in the stacked weights is i, f, g, o."""
    hidden = h.shape[1]
    if w_ih.shape != (4 * hidden, x.shape[1]) or w_hh.shape != (4 * hidden, hidden):
        raise ValueError(
            f"lstm_cell: weights {w_ih.shape}/{w_hh.shape} inconsistent with "
            f"input {x.shape} and hidden {h.shape}"
        )
    gates = x @ w_ih.T + h @ w_hh.T + bias
    i = sigmoid(gates[:, 0:hidden])
    f = sigmoid(gates[:, hidden : 2 * hidden])
    g = tanh(gates[:, 2 * hidden : 3 * hidden])
    o = sigmoid(gates[:, 3 * hidden :])
    c_next = f * c + i * g
    h_next = o * tanh(c_next)
    return h_next, c_next


# convolution and pooling ---------------------------------------------------


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of an N x C x H x W batch with K x C x kh x kw filters."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    n, c, h, w = x.shape
    k, _, kh, kw = weight.shape
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    cols2 = cols.reshape(c * kh * kw, n * ho * wo)
    w2 = weight.data.reshape(k, -1)
    out = (w2 @ cols2).reshape(k, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, k, 1, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(k, -1)
        gw = (g2 @ cols2.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(c, kh, kw, n, ho, wo)
            gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += (
                        gcols[:, i, j].transpose(1, 0, 2, 3)
                    )
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out, parents, backward, "conv2d")


def max_pool2d(x: Tensor, kernel: int = 2, stride: int | None = None, padding: int = 0) -> Tensor:
    stride = kernel if stride is None else stride
    n, c, h, w = x.shape
    ho, wo = _out_size(h, kernel, stride, padding), _out_size(w, kernel, stride, padding)
    xp = (
        np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
        if padding
        else x.data
    )
    windows = np.stack(
        [
            xp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
            for i in range(kernel)
            for j in range(kernel)
        ]
    )
    arg = windows.argmax(axis=0)
    out = np.take_along_axis(windows, arg[None], axis=0)[0]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=x.dtype)
        for idx in range(kernel * kernel):
            i, j = divmod(idx, kernel)
            gxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += g * (arg == idx)
        return (gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp,)

    return make_op(out, (x,), backward, "max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """N x C x H x W -> N x C."""
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool expects a 4-D input, got {x.shape}")
    return x.mean(axis=(2, 3))


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of an N x C x H x W batch.

    In training mode the running buffers are updated in place with the biased
    batch variance.
    """
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ValueError(f"batch_norm: input {x.shape} does not match {gamma.shape[0]} channels")
    if x.shape[0] == 0:
        raise ValueError("batch_norm: empty batch")
    shape = (1, -1, 1, 1)
    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)
    count = x.shape[0] * x.shape[2] * x.shape[3]

    def backward(g):
        gg = (g * xhat).sum(axis=(0, 2, 3))
        gb = g.sum(axis=(0, 2, 3))
        scale = (gamma.data * inv_std).reshape(shape)
        if training:
            gx = scale * (g - gb.reshape(shape) / count - xhat * gg.reshape(shape) / count)
        else:
            gx = scale * g
        return gx, gg, gb

    return make_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, "batch_norm")


# losses --------------------------------------------------------------------


def mse_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target, pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shapes differ {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


def bce_loss(prob: Tensor, label, eps: float = 1e-7) -> Tensor:
    label = as_tensor(label, prob.dtype)
    if prob.shape != label.shape:
        raise ValueError(f"bce_loss: shapes differ {prob.shape} vs {label.shape}")
    p = clip(prob, eps, 1.0 - eps)
    return -(label * log(p) + (1.0 - label) * log(1.0 - p)).mean()
