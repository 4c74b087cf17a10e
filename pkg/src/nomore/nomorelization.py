"""Residual blocks whose normalizers are replaced by trainable scalars and noise.

A NoMore block computes ``x + alpha * f(x) + beta + gamma_noise * delta``
where ``alpha`` and ``beta`` are per-block scalars initialised to zero and
``delta`` is fresh standard Gaussian noise in Train mode only. SkipInit is
the same block without ``beta`` and noise. BN / LN blocks keep the
conventional ``layer -> norm -> relu -> layer -> norm`` body, so all
wrappers share one skeleton and identical body weights for a given seed.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import tensor as T
from .errors import FormatError, ShapeError
from .normalizers import Mode, NormalizerSpec, NormKind
from .tensor import Rng, Tensor, _node, derive_key, dump_tensor, kaiming_init, load_tensor


class Wrapper(str, enum.Enum):
    BATCHNORM = "bn"
    LAYERNORM = "ln"
    SKIPINIT = "skipinit"
    NOMORE = "nomore"
    NONE = "none"


DEFAULT_GAMMA = {Wrapper.BATCHNORM: 0.1, Wrapper.LAYERNORM: 1e-4}


@dataclass
class NoMoreParams:
    alpha: Tensor = field(default=None)
    beta: Tensor | None = field(default=None)
    gamma_noise: float = 0.1
    mode: Mode = Mode.TRAIN

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = Tensor(0.0, requires_grad=True)
        if self.beta is None:
            self.beta = Tensor(0.0, requires_grad=True)
        if self.alpha.ndim != 0 or self.beta.ndim != 0:
            raise ShapeError("alpha and beta must be scalars (shape [])")
        if not self.gamma_noise >= 0:
            raise ValueError("gamma_noise must be >= 0")
        self.mode = Mode(self.mode)


def affine_noise(f: Tensor, alpha: Tensor, beta: Tensor | None, gamma: float = 0.0,
                 key: int = 0) -> Tensor:
    """``alpha * f + beta + gamma * delta`` as one fused op.

    ``delta`` comes from the counter-based Gaussian kernel keyed by ``key``
    and is a constant on the tape: no gradient flows into it.
    """
    if alpha.ndim != 0 or (beta is not None and beta.ndim != 0):
        raise ShapeError("affine_noise: alpha and beta must have shape []")
    a = float(alpha.data)
    b = 0.0 if beta is None else float(beta.data)
    out = K.affine_noise_forward(f.data, a, b, float(gamma), key)
    fd = f.data

    def back(g):
        df, da, db = K.affine_noise_backward(g, fd, a)
        if beta is None:
            return df, np.asarray(da)
        return df, np.asarray(da), np.asarray(db)

    parents = (f, alpha) if beta is None else (f, alpha, beta)
    return _node(out, parents, back)


def downsample_identity(x: Tensor) -> Tensor:
    """2x2 average pool then zero-pad the channel axis to twice its size."""
    if x.ndim != 4:
        raise ShapeError(f"downsample_identity: needs [B, C, H, W], got {list(x.shape)}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"downsample_identity: spatial size {x.shape[2:]} must be even")
    return T.concat_zero_channels(T.avg_pool2x2(x))


class ResidualBlock:
    """One residual block with a swappable wrapper.

    ``body`` is ``"conv"`` (conv3x3-relu-conv3x3) or ``"mlp"``
    (linear-relu-linear). With ``downsample`` the first conv has stride 2
    and doubles the channels while the identity path goes through
    :func:`downsample_identity`.
    """

    def __init__(self, body: str, width: int, wrapper, rng: Rng, *, index: int = 0,
                 gamma_noise: float | None = None, downsample: bool = False):
        self.body = body
        self.wrapper = Wrapper(wrapper)
        self.index = index
        self.downsample = downsample
        self.in_width = width
        self.out_width = 2 * width if downsample else width
        if body == "mlp" and downsample:
            raise ValueError("mlp blocks cannot downsample")
        out = self.out_width
        wrng = rng.child("block", index)
        if body == "conv":
            self.w1 = kaiming_init(wrng.child("w1"), width * 9, (out, width, 3, 3))
            self.w2 = kaiming_init(wrng.child("w2"), out * 9, (out, out, 3, 3))
            self.b1 = self.b2 = None
        elif body == "mlp":
            self.w1 = kaiming_init(wrng.child("w1"), width, (width, width))
            self.w2 = kaiming_init(wrng.child("w2"), width, (width, width))
            self.b1 = Tensor(np.zeros(width), requires_grad=True)
            self.b2 = Tensor(np.zeros(width), requires_grad=True)
        else:
            raise ValueError(f"unknown body kind {body!r}")
        self.norms = []
        self.params = None
        if self.wrapper in (Wrapper.BATCHNORM, Wrapper.LAYERNORM):
            kind = NormKind.BN if self.wrapper is Wrapper.BATCHNORM else NormKind.LN
            self.norms = [NormalizerSpec(kind, out), NormalizerSpec(kind, out)]
        elif self.wrapper in (Wrapper.SKIPINIT, Wrapper.NOMORE):
            if gamma_noise is None:
                gamma_noise = DEFAULT_GAMMA[Wrapper.BATCHNORM]
            self.params = NoMoreParams(gamma_noise=gamma_noise if self.wrapper is Wrapper.NOMORE else 0.0)
        self.noise_key = rng.key("noise", index)
        self.step = 0
        self.mode = Mode.TRAIN

    # -- mode -------------------------------------------------------------
    def set_mode(self, mode):
        self.mode = Mode(mode)
        for n in self.norms:
            n.mode = self.mode
        if self.params is not None:
            self.params.mode = self.mode

    # -- forward ----------------------------------------------------------
    def _layer(self, x, i):
        w, b = (self.w1, self.b1) if i == 1 else (self.w2, self.b2)
        if self.body == "conv":
            stride = 2 if (i == 1 and self.downsample) else 1
            return T.conv2d(x, w, stride=stride, padding=1)
        return T.linear(x, w, b)

    def residual(self, x: Tensor) -> Tensor:
        """The body ``f(x)`` including any normalizers."""
        h = self._layer(x, 1)
        if self.norms:
            h = self.norms[0](h)
        h = T.relu(h)
        h = self._layer(h, 2)
        if self.norms:
            h = self.norms[1](h)
        return h

    def identity(self, x: Tensor) -> Tensor:
        return downsample_identity(x) if self.downsample else x

    def __call__(self, x: Tensor) -> Tensor:
        f = self.residual(x)
        if self.params is not None:
            f = self._wrap(f)
        return T.add(self.identity(x), f)

    def _wrap(self, f):
        p = self.params
        gamma = p.gamma_noise if p.mode is Mode.TRAIN else 0.0
        key = 0
        if gamma:
            key = derive_key(self.noise_key, self.step)
            self.step += 1
        beta = p.beta if self.wrapper is Wrapper.NOMORE else None
        return affine_noise(f, p.alpha, beta, gamma, key)

    # -- parameters -------------------------------------------------------
    def named_tensors(self):
        """(name, tensor, role) for every stored tensor, trainable or not."""
        out = [("w1", self.w1, "weight")]
        if self.b1 is not None:
            out.append(("b1", self.b1, "bias"))
        out.append(("w2", self.w2, "weight"))
        if self.b2 is not None:
            out.append(("b2", self.b2, "bias"))
        for i, n in enumerate(self.norms):
            out.extend((f"norm{i + 1}.{name}", t, name) for name, t in n.state())
        if self.params is not None:
            out.append(("alpha", self.params.alpha, "alpha"))
            if self.wrapper is Wrapper.NOMORE:
                out.append(("beta", self.params.beta, "beta"))
        return out

    def parameters(self):
        return [t for _, t, _ in self.named_tensors() if t.requires_grad]


class Model:
    """Stem -> residual blocks -> (global pool) -> linear head."""

    def __init__(self, stem_kind: str, stem_w: Tensor, blocks: list, head_w: Tensor,
                 head_b: Tensor, wrapper, gamma_noise: float):
        self.stem_kind = stem_kind
        self.stem_w = stem_w
        self.blocks = blocks
        self.head_w = head_w
        self.head_b = head_b
        self.wrapper = Wrapper(wrapper)
        self.gamma_noise = gamma_noise
        self.mode = Mode.TRAIN

    def stem(self, x: Tensor) -> Tensor:
        if self.stem_kind == "conv":
            return T.relu(T.conv2d(x, self.stem_w, stride=1, padding=1))
        return T.linear(x, self.stem_w)

    def head(self, h: Tensor) -> Tensor:
        if h.ndim == 4:
            h = T.global_avg_pool(h)
        return T.linear(h, self.head_w, self.head_b)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        for blk in self.blocks:
            h = blk(h)
        return self.head(h)

    def forward_identity(self, x: Tensor) -> Tensor:
        """The same network with every residual body removed."""
        h = self.stem(x)
        for blk in self.blocks:
            h = blk.identity(h)
        return self.head(h)

    def train(self):
        self._set_mode(Mode.TRAIN)
        return self

    def eval(self):
        self._set_mode(Mode.EVAL)
        return self

    def _set_mode(self, mode):
        self.mode = mode
        for b in self.blocks:
            b.set_mode(mode)

    def named_tensors(self):
        out = [("stem.w", self.stem_w, "weight")]
        for i, b in enumerate(self.blocks):
            out.extend((f"block{i}.{n}", t, r) for n, t, r in b.named_tensors())
        out.append(("head.w", self.head_w, "weight"))
        out.append(("head.b", self.head_b, "bias"))
        return out

    def parameters(self):
        return [t for _, t, _ in self.named_tensors() if t.requires_grad]

    def scalar_parameters(self):
        """alpha / beta tensors; these are exempt from weight decay."""
        return [t for _, t, r in self.named_tensors() if r in ("alpha", "beta") and t.requires_grad]


def _head(width, num_classes):
    # zero head: logits start at 0, so an untrained model predicts class 0
    return (Tensor(np.zeros((width, num_classes)), requires_grad=True),
            Tensor(np.zeros(num_classes), requires_grad=True))


def build_resnet(stages, base_channels: int, wrapper, gamma_noise: float | None, rng: Rng,
                 num_classes: int = 10, in_channels: int = 3) -> Model:
    """CIFAR-style ResNet: channels double and resolution halves per stage."""
    stages = list(stages)
    if not stages or any(int(s) < 1 for s in stages):
        raise ValueError("stages must be a non-empty list of positive block counts")
    wrapper = Wrapper(wrapper)
    if gamma_noise is None:
        gamma_noise = DEFAULT_GAMMA[Wrapper.BATCHNORM]
    stem_w = kaiming_init(rng.child("stem"), in_channels * 9, (base_channels, in_channels, 3, 3))
    blocks, width, idx = [], base_channels, 0
    for s, count in enumerate(stages):
        for j in range(int(count)):
            down = s > 0 and j == 0
            blocks.append(ResidualBlock("conv", width, wrapper, rng, index=idx,
                                        gamma_noise=gamma_noise, downsample=down))
            width = blocks[-1].out_width
            idx += 1
    hw, hb = _head(width, num_classes)
    return Model("conv", stem_w, blocks, hw, hb, wrapper, gamma_noise)


def build_mlp(in_dim: int, width: int, depth: int, num_classes: int, wrapper,
              gamma_noise: float | None, rng: Rng) -> Model:
    """Residual MLP: linear stem, ``depth`` linear-relu-linear blocks, linear head."""
    wrapper = Wrapper(wrapper)
    if gamma_noise is None:
        gamma_noise = DEFAULT_GAMMA[Wrapper.BATCHNORM]
    stem_w = kaiming_init(rng.child("stem"), in_dim, (in_dim, width))
    blocks = [ResidualBlock("mlp", width, wrapper, rng, index=i, gamma_noise=gamma_noise)
              for i in range(depth)]
    hw, hb = _head(width, num_classes)
    return Model("linear", stem_w, blocks, hw, hb, wrapper, gamma_noise)


def parameter_audit(model: Model) -> dict:
    """Element counts per tensor role."""
    counts = {}
    for _, t, role in model.named_tensors():
        counts[role] = counts.get(role, 0) + t.size
    return counts


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: Model, directory) -> Path:
    """Write ``manifest.txt`` and ``tensors.bin`` (concatenated dumps)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"wrapper={model.wrapper.value}", f"gamma_noise={model.gamma_noise!r}"]
    buf = io.BytesIO()
    for name, t, role in model.named_tensors():
        lines.append(f"{name}\t{','.join(str(s) for s in t.shape)}\t{role}")
        dump_tensor(t, buf)
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    (d / "tensors.bin").write_bytes(buf.getvalue())
    return d


def read_manifest(directory) -> tuple[dict, list]:
    text = (Path(directory) / "manifest.txt").read_text().splitlines()
    meta, entries = {}, []
    for line in text:
        if "\t" in line:
            name, shape, role = line.split("\t")
            dims = tuple(int(s) for s in shape.split(",")) if shape else ()
            entries.append((name, dims, role))
        elif "=" in line:
            k, v = line.split("=", 1)
            meta[k] = v
    return meta, entries


def load_checkpoint(model: Model, directory) -> Model:
    meta, entries = read_manifest(directory)
    if meta.get("wrapper") != model.wrapper.value:
        raise FormatError(f"checkpoint wrapper {meta.get('wrapper')} != model {model.wrapper.value}")
    named = model.named_tensors()
    if [(n, t.shape, r) for n, t, r in named] != entries:
        raise FormatError("checkpoint manifest does not match the model layout")
    with open(Path(directory) / "tensors.bin", "rb") as fh:
        for _, t, _ in named:
            t.data[...] = load_tensor(fh)
    return model
