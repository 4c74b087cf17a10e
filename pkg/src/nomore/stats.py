"""One-sample Hotelling T^2, the F distribution, and PCA."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalSingularityError

LEVELS = (0.05, 0.01)


@dataclass(frozen=True)
class HotellingResult:
    t2: float
    f_stat: float
    df1: int
    df2: int
    p_value: float
    n: int
    d: int
    pseudo: bool = False

    @property
    def significant(self) -> bool:
        return self.p_value < LEVELS[0]

    @property
    def highly_significant(self) -> bool:
        return self.p_value < LEVELS[1]

    def decision(self) -> str:
        if self.highly_significant:
            return "reject (p<0.01)"
        if self.significant:
            return "reject (p<0.05)"
        return "accept"


# ------------------------------------------------------------ incomplete beta


def _beta_cf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    """Continued fraction for I_x(a, b), modified Lentz."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirling_err(z: float) -> float:
    """lgamma(z) minus its Stirling approximation."""
    if z < 15.0:
        return math.lgamma(z) - ((z - 0.5) * math.log(z) - z + _HALF_LOG_2PI)
    z2 = z * z
    return (1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - 1.0 / (1680 * z2)) / z2) / z2) / z


def _bd0(x: float, m: float) -> float:
    """``x log(x/m) + m - x`` without cancellation when x is close to m."""
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 1000):
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s
            s = s1
    return x * math.log(x / m) + m - x


def _log_front(a: float, b: float, x: float, y: float) -> float:
    """log of x^a y^b / B(a, b) with y = 1 - x."""
    if max(a, b) < 100.0:
        return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(y))
    # lgamma differences lose ~|lgamma| * eps here; split off Stirling terms instead
    n = a + b
    corr = _stirling_err(n) - _stirling_err(a) - _stirling_err(b)
    return (-_bd0(a, n * x) - _bd0(b, n * y)
            + 0.5 * math.log(a * b / n) - _HALF_LOG_2PI + corr)


def betainc_reg(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularised incomplete beta I_x(a, b).

    ``y`` may carry ``1 - x`` when the caller knows it more precisely than
    the subtraction would give it (x close to 1, or huge ``a + b``).
    """
    if not (a > 0 and b > 0):
        raise ValueError("betainc_reg: a and b must be positive")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"betainc_reg: x must lie in [0, 1], got {x}")
    if y is None:
        y = 1.0 - x
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    # the fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_front(a, b, x, y)) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(_log_front(a, b, x, y)) * _beta_cf(b, a, y) / b


def _f_args(x, df1, df2):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("F distribution argument must be finite")
    if x < 0:
        raise ValueError("F distribution argument must be >= 0")
    if not (df1 > 0 and df2 > 0):
        raise ValueError("degrees of freedom must be positive")
    return x, float(df1), float(df2)


def f_cdf(x: float, df1: float, df2: float) -> float:
    x, df1, df2 = _f_args(x, df1, df2)
    if x == 0.0:
        return 0.0
    den = df1 * x + df2
    return betainc_reg(df1 / 2.0, df2 / 2.0, df1 * x / den, df2 / den)


def f_sf(x: float, df1: float, df2: float) -> float:
    """Upper tail, computed directly so small p-values keep their precision."""
    x, df1, df2 = _f_args(x, df1, df2)
    if x == 0.0:
        return 1.0
    den = df1 * x + df2
    return betainc_reg(df2 / 2.0, df1 / 2.0, df2 / den, df1 * x / den)


# ------------------------------------------------------------------ Hotelling


def _solve_spd(s: np.ndarray, v: np.ndarray, pseudo: bool) -> tuple[np.ndarray, bool]:
    try:
        chol = np.linalg.cholesky(s)
        # a factor with a vanishing pivot still "succeeds"; treat it as singular
        diag = np.diag(chol)
        if np.min(diag) <= 1e-7 * np.sqrt(max(np.max(np.diag(s)), 1e-300)):
            raise np.linalg.LinAlgError("near-singular")
        y = np.linalg.solve(chol, v)
        return np.linalg.solve(chol.T, y), False
    except np.linalg.LinAlgError:
        if not pseudo:
            raise NumericalSingularityError(
                "sample covariance is singular; pass pseudo=True to floor its spectrum"
            ) from None
    d = s.shape[0]
    w, q = np.linalg.eigh(s)
    floor = 1e-12 * max(np.trace(s), 1e-300) / d
    w = np.maximum(w, floor)
    return q @ ((q.T @ v) / w), True


def hotelling_one_sample(samples, mu0=None, pseudo: bool = False) -> HotellingResult:
    """Test H0: E[x] = mu0 with T^2 = n (xbar - mu0)' S^-1 (xbar - mu0)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be an n x d matrix")
    n, d = x.shape
    if n <= d:
        raise ValueError(f"Hotelling needs n > d, got n={n}, d={d}")
    mu0 = np.zeros(d) if mu0 is None else np.asarray(mu0, dtype=np.float64).reshape(d)
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or Inf")
    xbar = x.mean(axis=0)
    s = np.cov(x, rowvar=False, ddof=1).reshape(d, d)
    diff = xbar - mu0
    sol, used_pseudo = _solve_spd(s, diff, pseudo)
    t2 = max(float(n * diff @ sol), 0.0)
    df1, df2 = d, n - d
    f_stat = t2 * df2 / (d * (n - 1))
    p = min(max(f_sf(f_stat, df1, df2), 0.0), 1.0)
    return HotellingResult(t2, f_stat, df1, df2, p, n, d, used_pseudo)


# ------------------------------------------------------------------------ PCA


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance: np.ndarray  # k, descending
    mean: np.ndarray  # d

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components

    def reconstruct(self, z) -> np.ndarray:
        """Back-project scores; the result is centred (``mean`` not added)."""
        return np.asarray(z, dtype=np.float64) @ self.components.T


def pca(samples, k: int) -> PcaResult:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be an n x d matrix")
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if n < 2:
        raise ValueError("pca needs at least 2 samples")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:k]
    w = np.clip(w[order], 0.0, None)
    v = v[:, order]
    # deterministic sign: largest-magnitude entry of each component positive
    idx = np.argmax(np.abs(v), axis=0)
    v = v * np.sign(v[idx, np.arange(k)])
    return PcaResult(v, w, mean)


def scatter_ratio(z: np.ndarray, labels) -> tuple[float, float]:
    """(between-class, within-class) scatter traces of the rows of ``z``."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    grand = z.mean(axis=0)
    between = within = 0.0
    for c in np.unique(labels):
        zc = z[labels == c]
        mc = zc.mean(axis=0)
        between += len(zc) * float(np.sum((mc - grand) ** 2))
        within += float(np.sum((zc - mc) ** 2))
    return between, within
