"""Numpy layer primitives with forward and backward passes.

All tensors are NHWC float64. Convolutions are stride-1 with SAME
padding; max-pooling supports stride 1 (3x3 cell op) and stride 2 (2x2
downsample). Each forward returns (output, cache); the matching backward
consumes the cache. Inference callers simply drop the cache.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5


def same_pads(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding so output size is ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _pad_nhwc(x, kh, kw, stride, value=0.0):
    (pt, pb) = same_pads(x.shape[1], kh, stride)
    (pl, pr) = same_pads(x.shape[2], kw, stride)
    if pt == pb == pl == pr == 0:
        return x, (0, 0, 0, 0)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=value)
    return xp, (pt, pb, pl, pr)


def conv2d_forward(x, w):
    """x: (N,H,W,Cin), w: (kh,kw,Cin,Cout); stride 1, SAME padding."""
    kh, kw = w.shape[0], w.shape[1]
    xp, pads = _pad_nhwc(x, kh, kw, 1)
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # N,OH,OW,C,kh,kw
    y = np.tensordot(windows, w, axes=([3, 4, 5], [2, 0, 1]))
    return y, (windows, w, x.shape, pads)


def conv2d_backward(dy, cache):
    windows, w, x_shape, (pt, pb, pl, pr) = cache
    kh, kw = w.shape[0], w.shape[1]
    # dw: contract over batch and spatial output positions.
    dw = np.tensordot(windows, dy, axes=([0, 1, 2], [0, 1, 2]))  # C,kh,kw,Cout
    dw = dw.transpose(1, 2, 0, 3)
    dcols = np.tensordot(dy, w, axes=([3], [3]))  # N,OH,OW,kh,kw,Cin
    n, h, w_, c = x_shape
    dxp = np.zeros((n, h + pt + pb, w_ + pl + pr, c))
    oh, ow = dy.shape[1], dy.shape[2]
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, pt:pt + h, pl:pl + w_, :]
    return dx, dw


def maxpool_forward(x, kernel, stride):
    kh, kw = kernel
    xp, pads = _pad_nhwc(x, kh, kw, stride, value=-np.inf)
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    flat = windows.reshape(*windows.shape[:4], kh * kw)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape, pads, kernel, stride)


def maxpool_backward(dy, cache):
    idx, x_shape, (pt, pb, pl, pr), (kh, kw), stride = cache
    n, h, w, c = x_shape
    oh, ow = dy.shape[1], dy.shape[2]
    dxp = np.zeros((n, h + pt + pb, w + pl + pr, c))
    for p in range(kh * kw):
        i, j = divmod(p, kw)
        mask = idx == p
        dxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += dy * mask
    return dxp[:, pt:pt + h, pl:pl + w, :]


def bn_forward_infer(x, gamma, beta, mean, var):
    return gamma * (x - mean) / np.sqrt(var + BN_EPS) + beta


def bn_forward_train(x, gamma, beta, mean, var, momentum):
    """Batch-statistics normalization; returns updated moving stats.

    Moving stats follow mov = momentum * mov + (1 - momentum) * batch;
    batch variance is the biased (1/m) estimate.
    """
    axes = tuple(range(x.ndim - 1))
    batch_mean = x.mean(axis=axes)
    batch_var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(batch_var + BN_EPS)
    xhat = (x - batch_mean) * inv_std
    y = gamma * xhat + beta
    new_mean = momentum * mean + (1.0 - momentum) * batch_mean
    new_var = momentum * var + (1.0 - momentum) * batch_var
    cache = (xhat, inv_std, gamma, axes, x.shape)
    return y, new_mean, new_var, cache


def bn_backward(dy, cache):
    xhat, inv_std, gamma, axes, x_shape = cache
    m = np.prod([x_shape[a] for a in axes])
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = inv_std / m * (m * dxhat - dxhat.sum(axis=axes)
                        - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy, cache):
    return dy * cache


def gap_forward(x):
    """Global average pool NHWC -> (N, C)."""
    return x.mean(axis=(1, 2)), x.shape


def gap_backward(dy, cache):
    n, h, w, c = cache
    return np.broadcast_to(dy[:, None, None, :] / (h * w), (n, h, w, c)).copy()


def dense_forward(x, w, b=None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def dense_backward(dy, cache):
    x, w, has_bias = cache
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0) if has_bias else None
    return dx, dw, db


def add_forward(xs):
    out = xs[0].copy()
    for x in xs[1:]:
        out += x
    return out, len(xs)


def add_backward(dy, cache):
    return [dy] * cache


def concat_forward(xs):
    sizes = [x.shape[-1] for x in xs]
    return np.concatenate(xs, axis=-1), sizes


def concat_backward(dy, cache):
    return np.split(dy, np.cumsum(cache)[:-1], axis=-1)


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy; returns (loss, dlogits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), labels].mean()
    probs = np.exp(logp)
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n
