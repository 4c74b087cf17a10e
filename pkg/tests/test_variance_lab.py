import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nomore.variance_lab import CSV_HEADER, DepthProbeConfig, ProbeWrapper, fit_growth, probe_variance


def probe(wrapper, **kw):
    kw.setdefault("trials", 8)
    return probe_variance(DepthProbeConfig(wrapper=wrapper, **kw))


@pytest.mark.parametrize("wrapper", ["skipinit", "nomore"])
@pytest.mark.parametrize("depth", [1, 5])
def test_zero_init_is_exact_identity(wrapper, depth):
    p = probe(wrapper, depth=depth, width=32, batch=64, trials=2)
    assert len(p.variances) == depth + 1
    assert_array_equal(p.variances, np.ones(depth + 1))
    assert p.fit is None if depth < 2 else p.fit.label == "constant"


def test_unnormalized_doubles_per_block():
    p = probe("unnormalized")
    assert 1.6 <= p.ratios().mean() <= 2.4
    assert p.fit.label == "exponential"


def test_normalized_grows_linearly():
    p = probe("normalized")
    l = np.arange(len(p.variances))
    assert np.all(np.abs(p.variances / (l + 1) - 1) < 0.2)
    assert np.all((p.increments() > 0.7) & (p.increments() < 1.3))
    assert p.fit.label == "linear"


def test_labels_stable_across_seeds():
    for seed in range(10):
        u = probe("unnormalized", width=64, batch=128, trials=2, rng_seed=seed)
        n = probe("normalized", width=64, batch=128, trials=2, rng_seed=seed)
        assert u.fit.label == "exponential", seed
        assert n.fit.label == "linear", seed


def test_width_independence():
    a = probe("unnormalized", width=32, batch=256, trials=32).variances
    b = probe("unnormalized", width=256, batch=256, trials=4).variances
    assert np.all(np.abs(a / b - 1) < 0.10)


def test_deterministic_and_rows():
    a = probe("normalized", depth=3, width=16, batch=32, trials=2, rng_seed=4)
    b = probe("normalized", depth=3, width=16, batch=32, trials=2, rng_seed=4)
    assert_array_equal(a.variances, b.variances)
    rows = list(a.rows())
    assert len(rows) == 4 and len(rows[0]) == len(CSV_HEADER)
    assert CSV_HEADER == ["wrapper", "l", "var_mean", "var_std", "trials", "seed"]
    assert rows[2][:2] == ["normalized", 2]


def test_config_validation():
    with pytest.raises(ValueError):
        DepthProbeConfig(depth=0)
    with pytest.raises(ValueError):
        DepthProbeConfig(trials=0)
    assert DepthProbeConfig(wrapper="nomore").wrapper is ProbeWrapper.NOMORE


class TestFitGrowth:
    def test_exact_exponential(self):
        f = fit_growth([1, 2, 4, 8])
        assert f.base == pytest.approx(2.0)
        assert f.label == "exponential"

    def test_exact_linear(self):
        f = fit_growth([1, 2, 3, 4])
        assert f.slope == pytest.approx(1.0)
        assert f.label == "linear"

    def test_noisy_exponential(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            seq = 2.0 ** np.arange(9) * rng.uniform(0.9, 1.1, 9)
            assert 1.8 <= fit_growth(seq).base <= 2.2

    def test_constant(self):
        assert fit_growth([1, 1, 1]).label == "constant"

    def test_too_short(self):
        with pytest.raises(ValueError):
            fit_growth([1, 2])

    def test_non_positive(self):
        with pytest.raises(ValueError):
            fit_growth([1, 0, 2])

    def test_accepts_profile(self):
        p = probe("unnormalized", depth=4, width=16, batch=32, trials=2)
        assert_allclose(fit_growth(p).base, p.fit.base)
