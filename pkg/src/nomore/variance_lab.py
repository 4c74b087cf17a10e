"""Activation variance versus depth in untrained residual MLPs.

Each block is ``x + wrap(f(x))`` with ``f = linear(relu(x))`` and Kaiming
weights, so ``Var f(x) ~= Var x``. Without a normaliser the variance doubles
per block; a normaliser after ``f`` pins the increment to 1; zero-initialised
multipliers make every block the identity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .normalizers import Mode, NormalizerSpec, NormKind
from .tensor import Rng, Tensor, kaiming_init


class ProbeWrapper(str, enum.Enum):
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"
    SKIPINIT = "skipinit"
    NOMORE = "nomore"


@dataclass(frozen=True)
class DepthProbeConfig:
    depth: int = 8
    width: int = 128
    batch: int = 256
    trials: int = 32
    wrapper: ProbeWrapper = ProbeWrapper.UNNORMALIZED
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "wrapper", ProbeWrapper(self.wrapper))
        for name in ("depth", "width", "batch", "trials"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.wrapper is ProbeWrapper.NORMALIZED and self.batch < 2:
            raise ValueError("the normalized probe needs batch >= 2")


@dataclass(frozen=True)
class GrowthFit:
    base: float  # exp of the log-linear slope
    slope: float  # least-squares slope in the raw scale
    intercept: float
    sse_exponential: float
    sse_linear: float
    label: str  # "exponential", "linear" or "constant"


@dataclass(frozen=True)
class VarianceProfile:
    config: DepthProbeConfig
    per_block_variance: list  # (l, mean pooled variance) for l = 0..depth
    var_std: np.ndarray  # across trials
    per_feature_variance: np.ndarray  # trials-mean of the mean per-feature variance
    fit: GrowthFit | None  # None when depth < 2 (too few points to fit)

    @property
    def variances(self) -> np.ndarray:
        return np.array([v for _, v in self.per_block_variance])

    def ratios(self) -> np.ndarray:
        v = self.variances
        return v[1:] / v[:-1]

    def increments(self) -> np.ndarray:
        return np.diff(self.variances)

    def rows(self):
        """CSV rows: wrapper, l, var_mean, var_std, trials, seed."""
        c = self.config
        for (l, v), s in zip(self.per_block_variance, self.var_std):
            yield [c.wrapper.value, l, repr(float(v)), repr(float(s)), c.trials, c.rng_seed]


CSV_HEADER = ["wrapper", "l", "var_mean", "var_std", "trials", "seed"]


def _trial(cfg: DepthProbeConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    x = rng.child("input").normal((cfg.batch, cfg.width))
    # exact standardisation so every profile starts at Var = 1
    x = (x - x.mean()) / x.std()
    h = Tensor(x)
    pooled = [float(np.var(h.data))]
    feat = [float(np.mean(np.var(h.data, axis=0)))]
    for l in range(cfg.depth):
        w = kaiming_init(rng.child("w", l), cfg.width, (cfg.width, cfg.width))
        f = T.linear(T.relu(h), w)
        if cfg.wrapper is ProbeWrapper.NORMALIZED:
            f = NormalizerSpec(NormKind.BN, cfg.width, mode=Mode.TRAIN)(f)
        elif cfg.wrapper in (ProbeWrapper.SKIPINIT, ProbeWrapper.NOMORE):
            # alpha = beta = 0 in Eval mode: the branch contributes exact zeros
            f = T.mul_scalar(f, Tensor(0.0))
            if cfg.wrapper is ProbeWrapper.NOMORE:
                f = T.add_scalar(f, Tensor(0.0))
        h = T.add(h, f)
        pooled.append(float(np.var(h.data)))
        feat.append(float(np.mean(np.var(h.data, axis=0))))
    return np.array(pooled), np.array(feat)


def probe_variance(cfg: DepthProbeConfig) -> VarianceProfile:
    root = Rng(cfg.rng_seed, ("variance", cfg.wrapper.value))
    pooled, feat = [], []
    with T.no_grad():
        for t in range(cfg.trials):
            p, f = _trial(cfg, root.child("trial", t))
            pooled.append(p)
            feat.append(f)
    pooled = np.array(pooled)
    mean = pooled.mean(axis=0)
    profile = [(l, float(v)) for l, v in enumerate(mean)]
    std = pooled.std(axis=0, ddof=1) if cfg.trials > 1 else np.zeros_like(mean)
    return VarianceProfile(cfg, profile, std, np.array(feat).mean(axis=0),
                           fit_growth(mean) if len(mean) >= 3 else None)


def fit_growth(profile) -> GrowthFit:
    """Fit ``v_l ~ c * base**l`` (log-linear) and ``v_l ~ a + slope * l``.

    The label goes to whichever model leaves the smaller squared residual in
    the original scale.
    """
    if isinstance(profile, VarianceProfile):
        v = profile.variances
    else:
        v = np.asarray(profile, dtype=np.float64)
    if v.ndim != 1 or len(v) < 3:
        raise ValueError("fit_growth needs at least 3 points")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("fit_growth needs positive finite variances")
    l = np.arange(len(v), dtype=np.float64)
    slope, intercept = np.polyfit(l, v, 1)
    lslope, lintercept = np.polyfit(l, np.log(v), 1)
    sse_lin = float(np.sum((intercept + slope * l - v) ** 2))
    sse_exp = float(np.sum((np.exp(lintercept + lslope * l) - v) ** 2))
    if np.ptp(v) <= 1e-12 * np.max(v):
        label = "constant"
    elif sse_exp < sse_lin:
        label = "exponential"
    else:
        label = "linear"
    return GrowthFit(math.exp(lslope), float(slope), float(intercept), sse_exp, sse_lin, label)
