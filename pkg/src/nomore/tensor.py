"""Dense float64 tensors with a reverse-mode tape, plus the training substrate.

Every op checks shapes explicitly; nothing broadcasts. A tensor that
``requires_grad`` records its parents and a backward closure; ``backward``
walks that graph in reverse topological order and accumulates gradients
into leaf tensors only, so repeated calls add up until ``zero_grad``.
"""

from __future__ import annotations

import contextlib
import hashlib
import io
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .errors import FormatError, InvalidStateError, NonFiniteError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @classmethod
    def _wrap(cls, arr, requires_grad=False):
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        t.data = arr if arr.flags.c_contiguous else arr.copy()
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._parents = ()
        t._backward = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"expected a single-element tensor, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor._wrap(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def check_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"tensor {self.name or ''} of shape {self.shape} has NaN/Inf")
        return self

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _node(data, parents, backward_fn):
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``."""
    if loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    if not loss.requires_grad:
        raise InvalidStateError("loss is not on the tape (no input requires grad)")
    grads = {id(loss): np.ones(())}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


# ---------------------------------------------------------------- elementwise


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _node(a.data + c, (a,), lambda g: (g,))
    _same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _node(a.data - c, (a,), lambda g: (g,))
    _same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _node(a.data * c, (a,), lambda g: (g * c,))
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def mul_scalar(x: Tensor, s: Tensor) -> Tensor:
    """``x * s`` for a shape-``[]`` tensor ``s`` (the one sanctioned broadcast)."""
    if s.ndim != 0:
        raise ShapeError(f"mul_scalar: scale must have shape [], got {list(s.shape)}")
    xd, sv = x.data, float(s.data)
    return _node(xd * sv, (x, s), lambda g: (g * sv, np.asarray(np.sum(g * xd))))


def add_scalar(x: Tensor, s: Tensor) -> Tensor:
    if s.ndim != 0:
        raise ShapeError(f"add_scalar: offset must have shape [], got {list(s.shape)}")
    return _node(x.data + float(s.data), (x, s), lambda g: (g, np.asarray(np.sum(g))))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return _node(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return _node(np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.size:
        raise ShapeError(f"reshape: cannot view {list(x.shape)} as {list(shape)}")
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


# --------------------------------------------------------------- dense / conv


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` for ``x: [B, din]``, ``w: [din, dout]``, ``b: [dout]``."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: input {list(x.shape)} incompatible with weight {list(w.shape)}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {list(b.shape)} must be [{w.shape[1]}]")
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is None:
        return _node(out, (x, w), lambda g: (g @ wd.T, xd.T @ g))
    out += b.data
    return _node(out, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x: [B,C,H,W]`` with ``w: [Cout,C,k,k]`` (no bias)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {list(x.shape)}, {list(w.shape)}")
    b, c, h, wd = x.shape
    co, ci, k, k2 = w.shape
    if ci != c or k != k2:
        raise ShapeError(f"conv2d: weight {list(w.shape)} does not match input channels {c}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {h}x{wd} (padding {padding})")
    cols, ho, wo = K.im2col(x.data, k, stride, padding)
    w2 = w.data.reshape(co, -1)
    out = (cols @ w2.T).reshape(b, ho, wo, co).transpose(0, 3, 1, 2)
    xshape, wshape = x.shape, w.shape
    need_x = x.requires_grad

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, co)
        dw = (g2.T @ cols).reshape(wshape)
        dx = K.col2im(g2 @ w2, xshape, k, stride, padding) if need_x else None
        return dx, dw

    return _node(np.ascontiguousarray(out), (x, w), back)


def avg_pool2x2(x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"avg_pool2x2: needs 4-D input with even spatial size, got {list(x.shape)}")
    b, c, h, w = x.shape
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def back(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return _node(out, (x,), back)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: needs 4-D input, got {list(x.shape)}")
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))
    return _node(out, (x,), lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),))


def concat_zero_channels(x: Tensor) -> Tensor:
    """Append as many all-zero channels as ``x`` already has (axis 1)."""
    if x.ndim < 2:
        raise ShapeError("concat_zero_channels: needs a channel axis")
    c = x.shape[1]
    out = np.concatenate([x.data, np.zeros_like(x.data)], axis=1)
    return _node(out, (x,), lambda g: (np.ascontiguousarray(g[:, :c]),))


def cross_entropy(logits: Tensor, labels, smoothing: float = 0.0) -> Tensor:
    """Mean softmax cross-entropy with optional uniform label smoothing."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [N, K], got {list(logits.shape)}")
    labels = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    target = np.full((n, k), smoothing / k)
    target[np.arange(n), labels] += 1.0 - smoothing
    loss = -np.sum(target * logp) / n

    def back(g):
        return ((np.exp(logp) - target) * (float(g) / n),)

    return _node(np.asarray(loss), (logits,), back)


# ------------------------------------------------------------------------ rng

_MASK = (1 << 64) - 1


def derive_key(key: int, counter: int) -> int:
    """SplitMix64 step: a fresh 64-bit key for ``(key, counter)``."""
    z = (key + (counter + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)



def _path_int(p) -> int:
    if isinstance(p, (int, np.integer)) and p >= 0:
        return int(p)
    digest = hashlib.blake2b(str(p).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Splittable seeded generator.

    ``child(*path)`` derives an independent stream from the root seed and a
    path (ints or strings), so a component's draws never depend on how many
    numbers other components consumed. ``key(*path)`` returns a 64-bit key
    for the counter-based Gaussian kernels.
    """

    def __init__(self, seed: int, path: tuple = ()):
        if int(seed) < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_path_int(p) for p in self.path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *path) -> "Rng":
        return Rng(self.seed, self.path + path)

    def key(self, *path) -> int:
        ss = np.random.SeedSequence(
            self.seed, spawn_key=tuple(_path_int(p) for p in self.path + ("key",) + path)
        )
        return int(ss.generate_state(1, np.uint64)[0])

    def normal(self, shape=(), std=1.0, mean=0.0) -> np.ndarray:
        return mean + std * self.generator.standard_normal(tuple(shape))

    def gaussian(self, shape, *path) -> np.ndarray:
        """Counter-based standard normals keyed by ``path`` (order independent)."""
        return K.gaussian_fill(self.key(*path), np.empty(tuple(shape)))

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"


def kaiming_init(rng: Rng, fan_in: int, shape: Sequence[int]) -> Tensor:
    """He-normal weights: i.i.d. N(0, 2 / fan_in), marked trainable."""
    if int(fan_in) < 1:
        raise ValueError(f"kaiming_init: fan_in must be >= 1, got {fan_in}")
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"kaiming_init: negative dimension in {list(shape)}")
    return Tensor._wrap(rng.normal(shape, std=math.sqrt(2.0 / fan_in)), requires_grad=True)


# ------------------------------------------------------------------ optimizer


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class SGD:
    """Heavy-ball SGD: ``v = m*v + grad + wd*p``; ``p -= lr*v``.

    Tensors listed in ``no_decay`` skip the weight-decay term.
    """

    params: list
    cfg: SgdConfig
    no_decay: Iterable[Tensor] = ()
    _velocity: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.params = list(self.params)
        self._skip = {id(p) for p in self.no_decay}

    def step(self):
        cfg = self.cfg
        for p in self.params:
            if p.grad is None:
                raise InvalidStateError(f"parameter {p.name or list(p.shape)} has no gradient")
        for p in self.params:
            g = p.grad
            if cfg.weight_decay and id(p) not in self._skip:
                g = g + cfg.weight_decay * p.data
            v = self._velocity.get(id(p))
            v = g.copy() if v is None else cfg.momentum * v + g
            self._velocity[id(p)] = v
            p.data -= cfg.learning_rate * v

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ----------------------------------------------------------------- gradcheck


@dataclass
class GradReport:
    errors: dict
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-6) -> np.ndarray:
    flat = t.data.reshape(-1)
    out = np.empty(flat.size)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn().data)
            flat[i] = orig - h
            fm = float(fn().data)
            flat[i] = orig
            out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(t.shape)


def relative_error(analytic, numeric, floor: float = 1e-3) -> float:
    """Max-norm error scaled by the larger gradient magnitude (floored)."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def gradcheck(fn: Callable[[], Tensor], tensors: dict, h: float = 1e-6, tol: float = 1e-4) -> GradReport:
    """Compare tape gradients of ``fn()`` with central differences.

    ``fn`` must rebuild the graph from the current contents of ``tensors``
    and be deterministic across calls.
    """
    for t in tensors.values():
        t.grad = None
    backward(fn())
    errors = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        errors[name] = relative_error(analytic, numerical_grad(fn, t, h))
    return GradReport(errors, tol)


# --------------------------------------------------------------- dump format


def dump_tensor(arr, fh: BinaryIO) -> None:
    """Write ``rank:u32, dims:u32*rank`` then raw little-endian f64 data."""
    arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype="<f8")
    fh.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
    fh.write(arr.tobytes(order="C"))


def load_tensor(fh: BinaryIO) -> np.ndarray:
    start = fh.tell() if fh.seekable() else None
    head = fh.read(4)
    if len(head) != 4:
        raise FormatError("truncated tensor header", start)
    (rank,) = struct.unpack("<I", head)
    dims_raw = fh.read(4 * rank)
    if len(dims_raw) != 4 * rank:
        raise FormatError("truncated tensor dims", start)
    dims = struct.unpack(f"<{rank}I", dims_raw)
    n = math.prod(dims)
    body = fh.read(8 * n)
    if len(body) != 8 * n:
        raise FormatError(f"expected {8 * n} data bytes, got {len(body)}", start)
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(dims)


def tensor_bytes(arr) -> bytes:
    buf = io.BytesIO()
    dump_tensor(arr, buf)
    return buf.getvalue()
