"""Experiment configuration: defaults, key=value files, CLI overrides, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .tensor import SgdConfig

COMMANDS = ("assertions", "variance", "train-compare", "sensitivity", "noise-sim")
GAMMA_GRID = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)


@dataclass
class ExperimentConfig:
    command: str = "train-compare"
    seed: int = 1
    seeds: tuple = (1, 2, 3)
    dataset: str = "synth"  # "synth" or "cifar10:PATH"
    output_dir: str = "out"
    bench: bool = False

    # model
    wrapper: str = "nomore"
    wrappers: tuple = ("bn", "skipinit", "nomore")
    gamma_noise: float = 0.1
    gammas: tuple = GAMMA_GRID
    width: int = 64
    depth: int = 4
    stages: tuple = (2, 2, 2)
    base_channels: int = 16

    # optimisation
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-5
    label_smoothing: float = 0.1
    steps: int = 2000
    batch_size: int = 128
    eval_every: int = 250

    # synthetic mixture
    num_classes: int = 4
    dim: int = 32
    separation: float = 2.0
    # BN is scale-invariant but injected noise is absolute, so the data scale
    # sets where the gamma grid crosses from negligible to dominant
    input_scale: float = 0.05
    n_train: int = 256
    n_test: int = 2000
    cifar_subset: int = 100

    # noise simulation / assertions
    noise_dim: int = 8
    noise_batch: int = 128
    reps: int = 200
    noise_reps: int = 10_000
    runs: int = 50
    assertion_separation: float = 8.0
    decomposition_separation: float = 10.0

    # variance probe
    probe_depth: int = 8
    probe_width: int = 128
    probe_batch: int = 256
    probe_trials: int = 32

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if not (self.dataset == "synth" or self.dataset.startswith("cifar10:")):
            raise ValueError(f"dataset must be 'synth' or 'cifar10:PATH', got {self.dataset!r}")
        if self.batch_size < 2 and "bn" in self.run_wrappers():
            raise ValueError("batch_size must be >= 2 when a BN model is in the run")
        if self.batch_size < 1 or self.steps < 0 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be positive, steps non-negative")
        if self.gamma_noise < 0:
            raise ValueError("gamma_noise must be >= 0")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")
        if self.command in ("assertions", "noise-sim") and not 1 <= self.num_classes <= self.noise_dim:
            raise ValueError("noise simulations need 1 <= num_classes <= noise_dim")
        self.sgd()  # validates lr / momentum / weight_decay

    def run_wrappers(self) -> tuple:
        if self.command == "train-compare":
            return tuple(self.wrappers)
        return (self.wrapper,)

    def sgd(self) -> SgdConfig:
        return SgdConfig(self.lr, self.momentum, self.weight_decay)

    # ---------------------------------------------------------- persistence
    def canonical(self) -> str:
        """Sorted ``key=value`` lines of every field except ``output_dir``."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name == "output_dir":
                continue
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self, n: int = 12) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:n]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return str(v)


_HINTS = typing.get_type_hints(ExperimentConfig)


def _parse(name: str, text: str):
    default = next(f.default for f in fields(ExperimentConfig) if f.name == name)
    hint = _HINTS[name]
    text = text.strip()
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if hint is int:
        return int(text, 0)
    if hint is float:
        return float(text)
    if hint is tuple:
        elem = type(default[0]) if default else str
        return tuple(elem(p.strip()) for p in text.split(",") if p.strip())
    return text


def parse_overrides(pairs) -> dict:
    """``{"key": "value"}`` strings to typed values; unknown keys are errors."""
    names = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for key, value in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in names:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _parse(key, value)
    return out


def read_config_file(path) -> dict:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return parse_overrides(pairs)


def load_config(command: str, path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then file values, then ``overrides`` (flags win)."""
    values = {"command": command}
    if path is not None:
        values.update(read_config_file(path))
        values["command"] = command
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**values)


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.canonical() + f"output_dir={cfg.output_dir}\n")


__all__ = ["COMMANDS", "ExperimentConfig", "GAMMA_GRID", "load_config",
           "parse_overrides", "read_config_file", "write_config"]
