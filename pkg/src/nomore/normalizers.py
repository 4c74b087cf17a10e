"""BatchNorm, LayerNorm and InstanceNorm as tape ops.

All three compute ``scale * (x - mu) / sqrt(var + eps) + bias`` with a
per-channel (axis 1) affine; they differ only in which axes the
statistics pool over:

* BN: batch and spatial axes, per channel. Train mode uses the batch's
  biased variance and folds it into running averages (unbiased there);
  Eval mode uses the running averages.
* LN: every non-batch axis, per sample. Mode independent.
* IN: spatial axes, per (sample, channel). Mode independent, 4-D only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from . import _kernels as K
from .errors import ShapeError
from .tensor import GradReport, Rng, Tensor, _node, dump_tensor, gradcheck, load_tensor
from . import tensor as T


class Mode(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


class NormKind(str, enum.Enum):
    BN = "bn"
    LN = "ln"
    IN = "in"


@dataclass
class NormalizerSpec:
    kind: NormKind
    num_features: int
    eps: float = 1e-5
    momentum: float = 0.1
    mode: Mode = Mode.TRAIN
    affine_scale: Tensor = field(default=None)
    affine_bias: Tensor = field(default=None)
    running_mean: Tensor = field(default=None)
    running_var: Tensor = field(default=None)

    def __post_init__(self):
        self.kind = NormKind(self.kind)
        self.mode = Mode(self.mode)
        c = int(self.num_features)
        if c < 1:
            raise ValueError("num_features must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if not 0.0 < self.momentum <= 1.0:
            raise ValueError("momentum must lie in (0, 1]")
        if self.affine_scale is None:
            self.affine_scale = Tensor(np.ones(c), requires_grad=True)
        if self.affine_bias is None:
            self.affine_bias = Tensor(np.zeros(c), requires_grad=True)
        if self.running_mean is None:
            self.running_mean = Tensor(np.zeros(c))
        if self.running_var is None:
            self.running_var = Tensor(np.ones(c))
        for name in ("affine_scale", "affine_bias", "running_mean", "running_var"):
            if getattr(self, name).shape != (c,):
                raise ShapeError(f"{name} must have length num_features={c}")
        if np.any(self.running_var.data < 0):
            raise ValueError("running_var must be non-negative")

    def parameters(self):
        return [self.affine_scale, self.affine_bias]

    def state(self):
        """(name, tensor) pairs in checkpoint order."""
        return [
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
            ("affine_scale", self.affine_scale),
            ("affine_bias", self.affine_bias),
        ]

    def __call__(self, x: Tensor) -> Tensor:
        return normalize(x, self)


def save_normalizer(spec: NormalizerSpec, fh: BinaryIO) -> None:
    for _, t in spec.state():
        dump_tensor(t, fh)


def load_normalizer(spec: NormalizerSpec, fh: BinaryIO) -> None:
    for name, t in spec.state():
        arr = load_tensor(fh)
        if arr.shape != t.shape:
            raise ShapeError(f"{name}: stored shape {list(arr.shape)} != {list(t.shape)}")
        t.data[...] = arr


def _check_channels(x, spec, op):
    if x.ndim < 2:
        raise ShapeError(f"{op}: input needs a batch and a channel axis, got {list(x.shape)}")
    if x.shape[1] != spec.num_features:
        raise ShapeError(f"{op}: {x.shape[1]} channels but num_features={spec.num_features}")


def bn_forward(x: Tensor, spec: NormalizerSpec) -> Tensor:
    _check_channels(x, spec, "bn_forward")
    b, c = x.shape[:2]
    train = spec.mode is Mode.TRAIN
    if train and b < 2:
        raise ValueError("bn_forward: Train mode needs a batch of at least 2")
    x3 = x.data.reshape(b, c, -1)
    scale, bias = spec.affine_scale.data, spec.affine_bias.data
    if train:
        y, xhat, mu, var, inv = K.bn_train_forward(x3, scale, bias, spec.eps)
        m = x3.shape[0] * x3.shape[2]
        mom = spec.momentum
        spec.running_mean.data[...] = (1.0 - mom) * spec.running_mean.data + mom * mu
        spec.running_var.data[...] = (1.0 - mom) * spec.running_var.data + mom * var * (m / (m - 1))
    else:
        y, xhat, inv = K.bn_eval_forward(
            x3, scale, bias, spec.running_mean.data, spec.running_var.data, spec.eps
        )
    shape = x.shape

    def back(g):
        dx, dscale, dbias = K.bn_backward(g.reshape(xhat.shape), xhat, inv, scale, train)
        return dx.reshape(shape), dscale, dbias

    return _node(y.reshape(shape), (x, spec.affine_scale, spec.affine_bias), back)


def _adaptive(x: Tensor, spec: NormalizerSpec, axes: tuple) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=axes, keepdims=True)
    centered = xd - mu
    var = np.mean(centered * centered, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + spec.eps)
    xhat = centered * inv
    cshape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
    scale = spec.affine_scale.data.reshape(cshape)
    y = xhat * scale + spec.affine_bias.data.reshape(cshape)
    channel_axes = (0,) + tuple(range(2, x.ndim))

    def back(g):
        gx = g * scale
        dx = inv * (
            gx - gx.mean(axis=axes, keepdims=True)
            - xhat * np.mean(gx * xhat, axis=axes, keepdims=True)
        )
        return dx, np.sum(g * xhat, axis=channel_axes), g.sum(axis=channel_axes)

    return _node(y, (x, spec.affine_scale, spec.affine_bias), back)


def ln_forward(x: Tensor, spec: NormalizerSpec) -> Tensor:
    _check_channels(x, spec, "ln_forward")
    return _adaptive(x, spec, tuple(range(1, x.ndim)))


def in_forward(x: Tensor, spec: NormalizerSpec) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"in_forward: needs [B, C, H, W] input, got {list(x.shape)}")
    _check_channels(x, spec, "in_forward")
    return _adaptive(x, spec, (2, 3))


_FORWARD = {NormKind.BN: bn_forward, NormKind.LN: ln_forward, NormKind.IN: in_forward}


def normalize(x: Tensor, spec: NormalizerSpec) -> Tensor:
    return _FORWARD[spec.kind](x, spec)


def norm_backward_check(spec: NormalizerSpec, shape=None, rng: Rng | None = None,
                        tol: float = 1e-4) -> GradReport:
    """Finite-difference check of the input and affine gradients of ``spec``.

    The loss is ``sum(w * y)`` for a fixed random ``w`` so that the
    gradient does not vanish identically (``sum(y)`` is flat under BN).
    """
    rng = rng or Rng(0)
    if shape is None:
        shape = (4, spec.num_features, 3, 3) if spec.kind is NormKind.IN else (4, spec.num_features)
    x = Tensor(rng.normal(shape), requires_grad=True)
    w = Tensor(rng.normal(shape))

    def loss():
        return T.sum(T.mul(normalize(x, spec), w))

    return gradcheck(loss, {"x": x, "scale": spec.affine_scale, "bias": spec.affine_bias}, tol=tol)
