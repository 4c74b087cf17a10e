"""Batch normalisation seen from one sample.

Fix a sample ``x_i`` and draw ``B - 1`` batch companions. Mean-only BN maps
it to ``xhat = (B-1)/B * x_i - delta`` with ``delta = (1/B) sum_{j != i} x_j``.
Under a Gaussian mixture prior ``delta`` splits into a composition-dependent
mean (inter-distribution noise) and a zero-centred Gaussian part
(intra-distribution noise). This module simulates that map, evaluates the
closed-form moments, and provides the inputs for the assertion tests.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .stats import pca, scatter_ratio
from .tensor import Rng


@dataclass
class MixtureSpec:
    means: np.ndarray  # n x d
    stds: np.ndarray  # n x d
    probs: np.ndarray  # n

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=np.float64))
        self.probs = np.atleast_1d(np.asarray(self.probs, dtype=np.float64))
        n = len(self.probs)
        if self.means.shape[0] != n or self.stds.shape[0] != n:
            raise ValueError("means, stds and probs must have one entry per distribution")
        if self.means.shape != self.stds.shape:
            raise ValueError("means and stds must both be n x d")
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        if not np.all(self.stds > 0):
            raise ValueError("stds must be positive")
        if not (np.all(np.isfinite(self.means)) and np.all(np.isfinite(self.stds))):
            raise ValueError("means and stds must be finite")

    @property
    def n(self) -> int:
        return len(self.probs)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def separated(cls, n: int, dim: int = 8, separation: float = 8.0, sigma: float = 1.0,
                  probs=None) -> "MixtureSpec":
        """Classes at ``separation / sqrt(2) * e_y``: every pair of means is
        ``separation`` apart (Euclidean)."""
        if n < 1 or n > dim:
            raise ValueError(f"separated() needs 1 <= n <= dim, got n={n}, dim={dim}")
        means = np.zeros((n, dim))
        if n > 1:
            means[np.arange(n), np.arange(n)] = separation / math.sqrt(2.0)
        probs = np.full(n, 1.0 / n) if probs is None else probs
        return cls(means, np.full((n, dim), float(sigma)), probs)


@dataclass(frozen=True)
class BatchComposition:
    """Class counts of a whole batch, the fixed sample included."""

    counts: tuple
    batch_size: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        if sum(counts) != self.batch_size:
            raise ValueError(f"counts sum to {sum(counts)}, batch size is {self.batch_size}")

    def companions(self, exclude_class: int) -> np.ndarray:
        m = np.array(self.counts)
        if m[exclude_class] < 1:
            raise ValueError(f"composition {self.counts} has no member of class {exclude_class}")
        m[exclude_class] -= 1
        return m

    def digest(self) -> str:
        return hashlib.sha256(",".join(map(str, self.counts)).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Free:
    """Companions drawn from the mixture by ``probs``."""


@dataclass(frozen=True)
class AllFromClass:
    y: int


@dataclass(frozen=True)
class FixedComposition:
    counts: tuple  # whole-batch counts, fixed sample included


@dataclass(frozen=True)
class NoiseSample:
    fixed_index_class: int
    delta: np.ndarray
    scaled_self: np.ndarray
    composition: BatchComposition

    @property
    def xhat(self) -> np.ndarray:
        return self.scaled_self - self.delta


@dataclass
class NoiseBatch(Sequence):
    """K simulated reps stored as arrays; indexing yields NoiseSample."""

    fixed_class: int
    x_fixed: np.ndarray
    batch_size: int
    delta: np.ndarray  # K x d
    counts: np.ndarray  # K x n, whole-batch counts
    mode: str = "centered"
    xhat: np.ndarray = field(init=False)

    def __post_init__(self):
        b = self.batch_size
        self.scaled_self = (b - 1) / b * self.x_fixed
        self.xhat = self.scaled_self - self.delta

    def __len__(self):
        return len(self.delta)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        comp = BatchComposition(tuple(self.counts[i]), self.batch_size)
        return NoiseSample(self.fixed_class, self.delta[i], self.scaled_self, comp)

    def fixed_composition(self) -> bool:
        return bool(np.all(self.counts == self.counts[0]))


def _companion_classes(spec: MixtureSpec, b: int, fixed_class: int, constraint, reps: int,
                       gen: np.random.Generator) -> np.ndarray:
    """reps x (B-1) class labels of the companions."""
    m = b - 1
    if isinstance(constraint, Free):
        return gen.choice(spec.n, size=(reps, m), p=spec.probs)
    if isinstance(constraint, AllFromClass):
        y = int(constraint.y)
        if not 0 <= y < spec.n or spec.probs[y] == 0:
            raise ValueError(f"AllFromClass({y}) is infeasible: class has probability 0")
        return np.full((reps, m), y)
    if isinstance(constraint, FixedComposition):
        comp = BatchComposition(tuple(constraint.counts), b)
        if len(comp.counts) != spec.n:
            raise ValueError("composition length must equal the number of distributions")
        comp_m = comp.companions(fixed_class)
        if np.any((comp_m > 0) & (spec.probs == 0)):
            raise ValueError("composition uses a class with probability 0")
        return np.tile(np.repeat(np.arange(spec.n), comp_m), (reps, 1))
    raise TypeError(f"unknown constraint {constraint!r}")


def simulate_bn_sample(x_fixed, spec: MixtureSpec, batch_size: int, constraint=Free(),
                       rng: Rng | None = None, reps: int = 1000, *, fixed_class: int = 0,
                       mode: str = "centered", eps: float = 1e-5) -> NoiseBatch:
    """Apply BN to ``reps`` random batches that all contain ``x_fixed``.

    ``x_fixed=None`` uses the mean of ``fixed_class``. ``mode="centered"``
    subtracts the batch mean only; ``mode="full"`` also divides by the
    per-dimension batch standard deviation, and ``delta`` is then defined
    as ``(B-1)/B * x_fixed - xhat`` so the decomposition stays an identity.
    """
    b = int(batch_size)
    if b < 2:
        raise ValueError("batch_size must be >= 2")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0 <= fixed_class < spec.n:
        raise ValueError(f"fixed_class {fixed_class} out of range")
    if mode not in ("centered", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng or Rng(0)
    x = spec.means[fixed_class].copy() if x_fixed is None else np.asarray(x_fixed, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValueError(f"x_fixed must have shape ({spec.dim},)")
    gen = rng.child("simulate").generator
    classes = _companion_classes(spec, b, fixed_class, constraint, reps, gen)
    z = gen.standard_normal((reps, b - 1, spec.dim))
    comp = spec.means[classes] + spec.stds[classes] * z
    if mode == "centered":
        delta = comp.sum(axis=1) / b
    else:
        mu = (comp.sum(axis=1) + x) / b
        var = (np.sum((comp - mu[:, None, :]) ** 2, axis=1) + (x - mu) ** 2) / b
        xhat = (x - mu) / np.sqrt(var + eps)
        delta = (b - 1) / b * x - xhat
    counts = np.zeros((reps, spec.n), dtype=np.int64)
    for y in range(spec.n):
        counts[:, y] = np.sum(classes == y, axis=1)
    counts[:, fixed_class] += 1
    return NoiseBatch(fixed_class, x, b, delta, counts, mode)


def closed_form_noise(spec: MixtureSpec, composition: BatchComposition,
                      exclude_class: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-dimension variance of delta for a fixed composition."""
    if len(composition.counts) != spec.n:
        raise ValueError("composition length must equal the number of distributions")
    m = composition.companions(exclude_class).astype(np.float64)
    b = composition.batch_size
    mean = m @ spec.means / b
    var = m @ (spec.stds ** 2) / b ** 2
    return mean, var


def free_noise_moments(spec: MixtureSpec, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of delta when companions are drawn freely."""
    b = batch_size
    mu = spec.probs @ spec.means
    second = spec.probs @ (spec.stds ** 2 + spec.means ** 2)
    return (b - 1) / b * mu, (b - 1) / b ** 2 * (second - mu ** 2)


def composition_probability(spec: MixtureSpec, composition: BatchComposition) -> float:
    """Multinomial probability of the class-count vector."""
    counts = composition.counts
    if len(counts) != spec.n:
        raise ValueError("composition length must equal the number of distributions")
    if sum(counts) != composition.batch_size:
        raise ValueError("counts must sum to the batch size")
    coef = math.factorial(composition.batch_size)
    for c in counts:
        coef //= math.factorial(c)
    p = float(coef)
    for c, q in zip(counts, spec.probs):
        if c:
            p *= float(q) ** c
    return p


def _xhat_matrix(samples) -> np.ndarray:
    if isinstance(samples, NoiseBatch):
        if not samples.fixed_composition():
            raise ValueError("samples must share one batch composition")
        return samples.xhat
    samples = list(samples)
    if samples and isinstance(samples[0], NoiseSample):
        if len({s.composition for s in samples}) > 1:
            raise ValueError("samples must share one batch composition")
        return np.array([s.xhat for s in samples])
    return np.asarray(samples, dtype=np.float64)


def extract_intra_noise(samples) -> np.ndarray:
    """All pairwise differences ``xhat(a) - xhat(b)``, a < b.

    The composition-dependent mean cancels, leaving zero-centred noise with
    per-dimension variance ``2 (B-1)/B^2 sigma^2``.
    """
    x = _xhat_matrix(samples)
    if len(x) < 2:
        raise ValueError("need at least 2 samples")
    return K.pairwise_differences(x)


def disjoint_differences(samples) -> np.ndarray:
    """``xhat(0) - xhat(1), xhat(2) - xhat(3), ...``: independent rows.

    The full pairwise set shares terms between rows, so it is unsuitable as
    input to a test that assumes i.i.d. observations.
    """
    x = _xhat_matrix(samples)
    if len(x) < 2:
        raise ValueError("need at least 2 samples")
    h = len(x) // 2
    return x[0:2 * h:2] - x[1:2 * h:2]


@dataclass(frozen=True)
class DecompositionReport:
    between: float
    within: float
    ratio: float
    accuracy: float
    explained_variance: np.ndarray
    degenerate: bool
    n_train: int
    n_test: int


def decompose_noise(samples_per_class: dict, k: int = 2) -> DecompositionReport:
    """PCA scatter and nearest-centroid batch-class identification.

    Each value is a NoiseBatch (or an array of xhat rows) for batches whose
    companions all came from the key's class. The first half of each class
    fits the centroids, the second half is scored.
    """
    if len(samples_per_class) < 2:
        raise ValueError("need at least 2 classes")
    xs, labels = [], []
    for y, s in sorted(samples_per_class.items()):
        x = s.xhat if isinstance(s, NoiseBatch) else np.asarray(s, dtype=np.float64)
        if len(x) < 10:
            raise ValueError(f"class {y}: need at least 10 samples")
        xs.append(x)
        labels.append(np.full(len(x), y))
    pooled = np.concatenate(xs)
    lab = np.concatenate(labels)
    k = min(k, pooled.shape[1])
    full = pca(pooled, pooled.shape[1])
    tr = np.trace(np.cov(pooled, rowvar=False).reshape(pooled.shape[1], -1))
    degenerate = bool(full.explained_variance[-1] <= 1e-12 * max(tr, 1e-300))
    z = pooled @ full.components[:, :k] - full.mean @ full.components[:, :k]
    between, within = scatter_ratio(z, lab)
    ratio = between / within if within > 0 else math.inf

    train_mask = np.zeros(len(lab), dtype=bool)
    start = 0
    for x in xs:
        train_mask[start:start + len(x) // 2] = True
        start += len(x)
    classes = np.unique(lab)
    centroids = np.array([pooled[train_mask & (lab == c)].mean(axis=0) for c in classes])
    test = pooled[~train_mask]
    d2 = np.sum((test[:, None, :] - centroids[None]) ** 2, axis=2)
    pred = classes[np.argmin(d2, axis=1)]
    acc = float(np.mean(pred == lab[~train_mask]))
    return DecompositionReport(between, within, ratio, acc,
                               full.explained_variance[:k], degenerate,
                               int(train_mask.sum()), len(test))


def noise_rows(batch: NoiseBatch):
    """CSV rows (rep, class, composition, delta_0..delta_{d-1})."""
    for i in range(len(batch)):
        comp = BatchComposition(tuple(batch.counts[i]), batch.batch_size)
        yield [i, batch.fixed_class, comp.digest(), *(repr(float(v)) for v in batch.delta[i])]
