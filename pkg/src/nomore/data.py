"""Synthetic mixture datasets, their binary file format, and CIFAR-10 loading.

Dataset file layout (little-endian)::

    magic   4s  b"NMDS"
    version u32 (1)
    n       u32
    d       u32
    classes u32
    features f64[n * d]  row-major
    labels   u16[n]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .noise_model import MixtureSpec
from .tensor import Rng

MAGIC = b"NMDS"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")

CIFAR_RECORD = 3073
CIFAR_MEAN = np.array([0.4914, 0.4822, 0.4465])
CIFAR_STD = np.array([0.2470, 0.2435, 0.2616])


@dataclass
class Split:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise ValueError("features and labels differ in length")

    def __len__(self):
        return len(self.y)


@dataclass
class Dataset:
    train: Split
    test: Split

    @property
    def num_classes(self) -> int:
        return self.train.num_classes

    @property
    def input_shape(self) -> tuple:
        return self.train.x.shape[1:]


def sample_mixture(spec: MixtureSpec, n: int, rng: Rng) -> Split:
    gen = rng.generator
    y = gen.choice(spec.n, size=n, p=spec.probs)
    x = spec.means[y] + spec.stds[y] * gen.standard_normal((n, spec.dim))
    return Split(x, y, spec.n)


def gen_mixture_dataset(spec: MixtureSpec, n_train: int, n_test: int, rng: Rng) -> Dataset:
    """Train and test splits drawn from disjoint substreams of ``rng``."""
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    return Dataset(sample_mixture(spec, n_train, rng.child("train")),
                   sample_mixture(spec, n_test, rng.child("test")))


def dataset_bytes(split: Split) -> bytes:
    if split.x.ndim != 2:
        raise ValueError("only flat feature matrices can be saved")
    n, d = split.x.shape
    if np.any(split.y < 0) or np.any(split.y > 0xFFFF):
        raise ValueError("labels must fit in u16")
    return (_HEADER.pack(MAGIC, VERSION, n, d, split.num_classes)
            + split.x.astype("<f8").tobytes() + split.y.astype("<u2").tobytes())


def save_dataset(split: Split, path) -> Path:
    path = Path(path)
    path.write_bytes(dataset_bytes(split))
    return path


def load_dataset(path) -> Split:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("dataset header truncated", offset=len(raw))
    magic, version, n, d, classes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    need = _HEADER.size + 8 * n * d + 2 * n
    if len(raw) != need:
        raise FormatError(f"expected {need} bytes, found {len(raw)}", offset=min(len(raw), need))
    off = _HEADER.size
    x = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(np.float64)
    y = np.frombuffer(raw, dtype="<u2", count=n, offset=off + 8 * n * d).astype(np.int64)
    if np.any(y >= classes):
        bad = int(np.argmax(y >= classes))
        raise FormatError(f"label {y[bad]} >= class count {classes}", offset=off + 8 * n * d + 2 * bad)
    return Split(x, y, classes)


# ------------------------------------------------------------------- CIFAR-10


def read_cifar10_records(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``uint8 [N, 3, 32, 32]`` images and labels from one binary batch file."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        whole = len(raw) - len(raw) % CIFAR_RECORD
        raise FormatError(f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD}",
                          offset=whole)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if np.any(labels > 9):
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{path}: label {labels[bad]} out of range 0..9", offset=bad * CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def normalize_cifar(images: np.ndarray) -> np.ndarray:
    x = images.astype(np.float64) / 255.0
    return (x - CIFAR_MEAN[None, :, None, None]) / CIFAR_STD[None, :, None, None]


def denormalize_cifar(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize_cifar`, rounded back to bytes."""
    px = (x * CIFAR_STD[None, :, None, None] + CIFAR_MEAN[None, :, None, None]) * 255.0
    return np.clip(np.rint(px), 0, 255).astype(np.uint8)


def _cifar_files(path: Path, split: str) -> list[Path]:
    if path.is_file():
        return [path]
    names = ["test_batch.bin"] if split == "test" else [f"data_batch_{i}.bin" for i in range(1, 6)]
    files = [path / n for n in names if (path / n).exists()]
    if not files:
        raise FileNotFoundError(f"no CIFAR-10 {split} batch files under {path}")
    return files


def balanced_subset(labels: np.ndarray, per_class: int, rng: Rng, num_classes: int = 10) -> np.ndarray:
    gen = rng.generator
    picks = []
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) < per_class:
            raise ValueError(f"class {c} has {len(idx)} records, subset needs {per_class}")
        picks.append(np.sort(gen.choice(idx, size=per_class, replace=False)))
    return np.sort(np.concatenate(picks))


def load_cifar10_binary(path, subset: int, rng: Rng | None = None, split: str = "train") -> Split:
    """Balanced ``subset``-per-class selection, normalised per channel."""
    rng = rng or Rng(0)
    images, labels = [], []
    for f in _cifar_files(Path(path), split):
        im, lab = read_cifar10_records(f)
        images.append(im)
        labels.append(lab)
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    idx = balanced_subset(labels, subset, rng.child("subset", split))
    return Split(normalize_cifar(images[idx]), labels[idx], 10)
