"""Both kernel backends against each other and against independent references."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats as sps

from nomore import _kernels
from nomore._kernels import _numba as NB
from nomore._kernels import _numpy as NP

BACKENDS = [NP, NB]
IDS = ["numpy", "numba"]


def test_backend_selection_respects_env():
    import importlib

    try:
        with pytest.MonkeyPatch.context() as mp:
            mp.setenv("NOMORE_DISABLE_NUMBA", "1")
            assert importlib.reload(_kernels).BACKEND == "numpy"
            mp.setenv("NOMORE_DISABLE_NUMBA", "0")
            assert importlib.reload(_kernels).BACKEND == "numba"
    finally:
        importlib.reload(_kernels)


@pytest.mark.parametrize("n", [1, 7, 4096, 100_003])
def test_gaussian_fill_bit_identical(n):
    a = NP.gaussian_fill(1234567, np.empty(n))
    b = NB.gaussian_fill(1234567, np.empty(n))
    assert_array_equal(a, b)


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_gaussian_fill_is_standard_normal(mod):
    z = mod.gaussian_fill(99, np.empty(200_000))
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    assert sps.kstest(z, "norm").pvalue > 1e-3
    # the ziggurat tail path is exercised and still matches the normal tail mass
    frac = np.mean(np.abs(z) > 3.5)
    expected = 2 * sps.norm.sf(3.5)
    assert abs(frac - expected) < 5 * np.sqrt(expected / z.size)


def test_gaussian_fill_keys_independent():
    a = NP.gaussian_fill(1, np.empty(50_000))
    b = NP.gaussian_fill(2, np.empty(50_000))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(a.size)


def test_gaussian_fill_prefix_stable():
    # element i depends only on (key, i), so a longer fill extends a shorter one
    short = NP.gaussian_fill(5, np.empty(100))
    long = NP.gaussian_fill(5, np.empty(1000))
    assert_array_equal(short, long[:100])


@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_affine_noise_backends_agree(gamma):
    f = np.random.default_rng(0).standard_normal((16, 8, 3, 3))
    a = NP.affine_noise_forward(f, 0.7, -0.2, gamma, 42)
    b = NB.affine_noise_forward(f, 0.7, -0.2, gamma, 42)
    assert_allclose(a, b, rtol=0, atol=1e-15)
    g = np.random.default_rng(1).standard_normal(f.shape)
    for x, y in zip(NP.affine_noise_backward(g, f, 0.7), NB.affine_noise_backward(g, f, 0.7)):
        assert_allclose(x, y, rtol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_bn_train_forward_reference(mod):
    x = np.random.default_rng(2).standard_normal((8, 3, 5)) * 3 + 1
    scale, bias = np.array([1.0, 2.0, 0.5]), np.array([0.0, -1.0, 3.0])
    y, xhat, mean, var, inv = mod.bn_train_forward(x, scale, bias, 1e-5)
    assert_allclose(mean, x.mean(axis=(0, 2)), atol=1e-12)
    assert_allclose(var, x.var(axis=(0, 2)), atol=1e-12)
    assert_allclose(xhat.mean(axis=(0, 2)), 0, atol=1e-12)
    assert_allclose(y, xhat * scale[None, :, None] + bias[None, :, None], atol=1e-12)


def test_bn_backends_agree():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((16, 4, 9))
    g = rng.standard_normal(x.shape)
    scale, bias = rng.standard_normal(4), rng.standard_normal(4)
    outs = [m.bn_train_forward(x, scale, bias, 1e-5) for m in BACKENDS]
    for a, b in zip(*outs):
        assert_allclose(a, b, atol=1e-12)
    _, xhat, mean, var, inv = outs[0]
    for train in (True, False):
        grads = [m.bn_backward(g, xhat, inv, scale, train) for m in BACKENDS]
        for a, b in zip(*grads):
            assert_allclose(a, b, atol=1e-11)
    ev = [m.bn_eval_forward(x, scale, bias, mean, var, 1e-5) for m in BACKENDS]
    for a, b in zip(*ev):
        assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_im2col_col2im_backends_agree(stride, pad):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 7, 6))
    ca, ho, wo = NP.im2col(x, 3, stride, pad)
    cb, ho2, wo2 = NB.im2col(x, 3, stride, pad)
    assert (ho, wo) == (ho2, wo2)
    assert_array_equal(ca, cb)
    d = rng.standard_normal(ca.shape)
    assert_allclose(NP.col2im(d, x.shape, 3, stride, pad), NB.col2im(d, x.shape, 3, stride, pad), atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_col2im_is_adjoint_of_im2col(mod):
    # <im2col(x), d> == <x, col2im(d)> for every x, d
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 2, 6, 5))
    cols, _, _ = mod.im2col(x, 3, 2, 1)
    d = rng.standard_normal(cols.shape)
    lhs = np.sum(cols * d)
    rhs = np.sum(x * mod.col2im(d, x.shape, 3, 2, 1))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_pairwise_differences_enumeration(mod):
    x = np.random.default_rng(6).standard_normal((6, 3))
    got = mod.pairwise_differences(x)
    ref = np.array([x[i] - x[j] for i in range(6) for j in range(i + 1, 6)])
    assert_array_equal(got, ref)
