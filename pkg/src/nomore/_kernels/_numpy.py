"""Pure-numpy kernel backend (reference path, always available)."""

import numpy as np

from ._tables import ATTEMPT, GOLDEN, MIX1, MIX2, TO_UNIT, ZIG_R, ZIG_RATIO, ZIG_X

NAME = "numpy"


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def _unit(z):
    return (z >> np.uint64(11)) * TO_UNIT


def _draw(ctr, k):
    return _mix(ctr ^ (k * ATTEMPT))


def _tail(ctr, k, u):
    res = np.empty(ctr.size)
    pending = np.arange(ctr.size)
    k = k.copy()
    while pending.size:
        k[pending] += np.uint64(1)
        a = _unit(_draw(ctr[pending], k[pending]))
        k[pending] += np.uint64(1)
        b = _unit(_draw(ctr[pending], k[pending]))
        x = np.log(1.0 - a) / ZIG_R
        y = np.log(1.0 - b)
        ok = -2.0 * y >= x * x
        done = pending[ok]
        res[done] = np.where(u[done] < 0, x[ok] - ZIG_R, ZIG_R - x[ok])
        pending = pending[~ok]
    return res


def gaussian_fill(key, out):
    """Fill ``out`` (C-contiguous float64) with standard normals keyed by ``key``."""
    flat = out.reshape(-1)
    n = flat.size
    idx = np.arange(n)
    ctr = np.uint64(key) + idx.astype(np.uint64) * GOLDEN
    k = np.zeros(n, dtype=np.uint64)
    while idx.size:
        k += np.uint64(1)
        z = _draw(ctr, k)
        j = (z & np.uint64(127)).astype(np.intp)
        u = 2.0 * _unit(z) - 1.0
        fast = np.abs(u) < ZIG_RATIO[j]
        flat[idx[fast]] = u[fast] * ZIG_X[j[fast]]
        slow = ~fast
        if not slow.any():
            break
        idx, ctr, k, j, u = idx[slow], ctr[slow], k[slow], j[slow], u[slow]
        tail = j == 0
        if tail.any():
            flat[idx[tail]] = _tail(ctr[tail], k[tail], u[tail])
            wedge = ~tail
            idx, ctr, k, j, u = idx[wedge], ctr[wedge], k[wedge], j[wedge], u[wedge]
        x = u * ZIG_X[j]
        f0 = np.exp(-0.5 * (ZIG_X[j] * ZIG_X[j] - x * x))
        f1 = np.exp(-0.5 * (ZIG_X[j + 1] * ZIG_X[j + 1] - x * x))
        k += np.uint64(1)
        v = _unit(_draw(ctr, k))
        acc = f1 + v * (f0 - f1) < 1.0
        flat[idx[acc]] = x[acc]
        keep = ~acc
        idx, ctr, k = idx[keep], ctr[keep], k[keep]
    return out


def affine_noise_forward(f, alpha, beta, gamma, key):
    out = alpha * f + beta
    if gamma != 0.0:
        out += gamma * gaussian_fill(key, np.empty(f.shape))
    return out


def affine_noise_backward(g, f, alpha):
    return alpha * g, float(np.sum(g * f)), float(np.sum(g))


def bn_train_forward(x3, scale, bias, eps):
    mean = x3.mean(axis=(0, 2))
    centered = x3 - mean[None, :, None]
    var = np.mean(centered * centered, axis=(0, 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std[None, :, None]
    y = xhat * scale[None, :, None] + bias[None, :, None]
    return y, xhat, mean, var, inv_std


def bn_eval_forward(x3, scale, bias, mean, var, eps):
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x3 - mean[None, :, None]) * inv_std[None, :, None]
    y = xhat * scale[None, :, None] + bias[None, :, None]
    return y, xhat, inv_std


def bn_backward(g3, xhat3, inv_std, scale, train):
    dbias = g3.sum(axis=(0, 2))
    dscale = np.sum(g3 * xhat3, axis=(0, 2))
    k = (scale * inv_std)[None, :, None]
    if not train:
        return g3 * k, dscale, dbias
    m = g3.shape[0] * g3.shape[2]
    dx = k * (g3 - (dbias / m)[None, :, None] - xhat3 * (dscale / m)[None, :, None])
    return dx, dscale, dbias


def im2col(x, k, stride, pad):
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return np.ascontiguousarray(cols), ho, wo


def col2im(dcols, shape, k, stride, pad):
    b, c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    d6 = dcols.reshape(b, ho, wo, c, k, k)
    dx = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            dx[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += (
                d6[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dx)


def pairwise_differences(x):
    ia, ib = np.triu_indices(x.shape[0], k=1)
    return x[ia] - x[ib]
