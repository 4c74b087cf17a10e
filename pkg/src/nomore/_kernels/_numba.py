"""numba-compiled kernel backend.

Same signatures and draw schedule as ``_numpy``. Loops are serial: the
reductions must stay deterministic for a fixed seed.
"""

import numpy as np
from numba import njit

from ._tables import ZIG_R, ZIG_RATIO, ZIG_X

NAME = "numba"

_X = ZIG_X
_RATIO = ZIG_RATIO


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _unit(z):
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _draw(ctr, k):
    return _mix(ctr ^ (k * np.uint64(0xD1B54A32D192ED03)))


@njit(inline="always")
def _normal_at(ctr, xs, ratio):
    k = np.uint64(0)
    while True:
        k += np.uint64(1)
        z = _draw(ctr, k)
        j = np.intp(z & np.uint64(127))
        u = 2.0 * _unit(z) - 1.0
        if abs(u) < ratio[j]:
            return u * xs[j]
        if j == 0:
            while True:
                k += np.uint64(1)
                a = _unit(_draw(ctr, k))
                k += np.uint64(1)
                b = _unit(_draw(ctr, k))
                x = np.log(1.0 - a) / ZIG_R
                y = np.log(1.0 - b)
                if -2.0 * y >= x * x:
                    break
            if u < 0:
                return x - ZIG_R
            return ZIG_R - x
        x = u * xs[j]
        f0 = np.exp(-0.5 * (xs[j] * xs[j] - x * x))
        f1 = np.exp(-0.5 * (xs[j + 1] * xs[j + 1] - x * x))
        k += np.uint64(1)
        if f1 + _unit(_draw(ctr, k)) * (f0 - f1) < 1.0:
            return x


@njit(cache=True)
def _fill(key, flat, xs, ratio):
    step = np.uint64(0x9E3779B97F4A7C15)
    ctr = key
    for i in range(flat.size):
        flat[i] = _normal_at(ctr, xs, ratio)
        ctr += step


def gaussian_fill(key, out):
    _fill(np.uint64(key), out.reshape(-1), _X, _RATIO)
    return out


@njit(cache=True)
def _affine_noise(f, alpha, beta, gamma, key, out, xs, ratio):
    step = np.uint64(0x9E3779B97F4A7C15)
    ctr = key
    if gamma != 0.0:
        for i in range(f.size):
            out[i] = alpha * f[i] + beta + gamma * _normal_at(ctr, xs, ratio)
            ctr += step
    else:
        for i in range(f.size):
            out[i] = alpha * f[i] + beta


def affine_noise_forward(f, alpha, beta, gamma, key):
    out = np.empty(f.shape)
    _affine_noise(
        np.ascontiguousarray(f).reshape(-1), alpha, beta, gamma, np.uint64(key),
        out.reshape(-1), _X, _RATIO,
    )
    return out


@njit(cache=True)
def _affine_noise_bwd(g, f, alpha, df):
    sa = 0.0
    sb = 0.0
    for i in range(g.size):
        sa += g[i] * f[i]
        sb += g[i]
        df[i] = alpha * g[i]
    return sa, sb


def affine_noise_backward(g, f, alpha):
    df = np.empty(g.shape)
    sa, sb = _affine_noise_bwd(
        np.ascontiguousarray(g).reshape(-1), np.ascontiguousarray(f).reshape(-1),
        alpha, df.reshape(-1),
    )
    return df, sa, sb


@njit(cache=True)
def _bn_train(x, scale, bias, eps, y, xhat, mean, var, inv):
    a_n, c_n, s_n = x.shape
    m = a_n * s_n
    mean[:] = 0.0
    var[:] = 0.0
    for a in range(a_n):
        for c in range(c_n):
            for s in range(s_n):
                mean[c] += x[a, c, s]
    for c in range(c_n):
        mean[c] /= m
    for a in range(a_n):
        for c in range(c_n):
            mu = mean[c]
            for s in range(s_n):
                d = x[a, c, s] - mu
                var[c] += d * d
    for c in range(c_n):
        var[c] /= m
        inv[c] = 1.0 / np.sqrt(var[c] + eps)
    for a in range(a_n):
        for c in range(c_n):
            mu = mean[c]
            iv = inv[c]
            sc = scale[c]
            bi = bias[c]
            for s in range(s_n):
                h = (x[a, c, s] - mu) * iv
                xhat[a, c, s] = h
                y[a, c, s] = h * sc + bi


def bn_train_forward(x3, scale, bias, eps):
    c = x3.shape[1]
    y = np.empty(x3.shape)
    xhat = np.empty(x3.shape)
    mean = np.empty(c)
    var = np.empty(c)
    inv = np.empty(c)
    _bn_train(np.ascontiguousarray(x3), scale, bias, eps, y, xhat, mean, var, inv)
    return y, xhat, mean, var, inv


@njit(cache=True)
def _bn_apply(x, scale, bias, mean, inv, y, xhat):
    a_n, c_n, s_n = x.shape
    for a in range(a_n):
        for c in range(c_n):
            for s in range(s_n):
                h = (x[a, c, s] - mean[c]) * inv[c]
                xhat[a, c, s] = h
                y[a, c, s] = h * scale[c] + bias[c]


def bn_eval_forward(x3, scale, bias, mean, var, eps):
    inv = 1.0 / np.sqrt(var + eps)
    y = np.empty(x3.shape)
    xhat = np.empty(x3.shape)
    _bn_apply(np.ascontiguousarray(x3), scale, bias, mean, inv, y, xhat)
    return y, xhat, inv


@njit(cache=True)
def _bn_bwd(g, xhat, inv, scale, train, dx, dscale, dbias):
    a_n, c_n, s_n = g.shape
    m = a_n * s_n
    dscale[:] = 0.0
    dbias[:] = 0.0
    for a in range(a_n):
        for c in range(c_n):
            for s in range(s_n):
                dbias[c] += g[a, c, s]
                dscale[c] += g[a, c, s] * xhat[a, c, s]
    for a in range(a_n):
        for c in range(c_n):
            k = scale[c] * inv[c]
            if train:
                mb = dbias[c] / m
                ms = dscale[c] / m
                for s in range(s_n):
                    dx[a, c, s] = k * (g[a, c, s] - mb - xhat[a, c, s] * ms)
            else:
                for s in range(s_n):
                    dx[a, c, s] = k * g[a, c, s]


def bn_backward(g3, xhat3, inv_std, scale, train):
    c = g3.shape[1]
    dx = np.empty(g3.shape)
    dscale = np.empty(c)
    dbias = np.empty(c)
    _bn_bwd(np.ascontiguousarray(g3), xhat3, inv_std, scale, bool(train), dx, dscale, dbias)
    return dx, dscale, dbias


@njit(cache=True)
def _im2col(x, k, stride, pad, ho, wo, cols):
    b_n, c_n, h, w = x.shape
    for b in range(b_n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                for c in range(c_n):
                    for ki in range(k):
                        r = i * stride + ki - pad
                        for kj in range(k):
                            q = j * stride + kj - pad
                            col = (c * k + ki) * k + kj
                            if 0 <= r < h and 0 <= q < w:
                                cols[row, col] = x[b, c, r, q]
                            else:
                                cols[row, col] = 0.0


def im2col(x, k, stride, pad):
    b, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    cols = np.empty((b * ho * wo, c * k * k))
    _im2col(np.ascontiguousarray(x), k, stride, pad, ho, wo, cols)
    return cols, ho, wo


@njit(cache=True)
def _col2im(dcols, k, stride, pad, ho, wo, dx):
    b_n, c_n, h, w = dx.shape
    for b in range(b_n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                for c in range(c_n):
                    for ki in range(k):
                        r = i * stride + ki - pad
                        if r < 0 or r >= h:
                            continue
                        for kj in range(k):
                            q = j * stride + kj - pad
                            if 0 <= q < w:
                                dx[b, c, r, q] += dcols[row, (c * k + ki) * k + kj]


def col2im(dcols, shape, k, stride, pad):
    b, c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    dx = np.zeros(shape)
    _col2im(np.ascontiguousarray(dcols), k, stride, pad, ho, wo, dx)
    return dx


@njit(cache=True)
def _pairwise(x, out):
    n, d = x.shape
    r = 0
    for a in range(n):
        for b in range(a + 1, n):
            for t in range(d):
                out[r, t] = x[a, t] - x[b, t]
            r += 1


def pairwise_differences(x):
    n, d = x.shape
    out = np.empty((n * (n - 1) // 2, d))
    _pairwise(np.ascontiguousarray(x), out)
    return out
