"""Normalizer-free residual blocks with noise injection, and the tools to study
batch-normalisation noise that motivate them."""

from ._kernels import BACKEND
from .errors import FormatError, InvalidStateError, NonFiniteError, NumericalSingularityError, ShapeError
from .nomorelization import NoMoreParams, ResidualBlock, Wrapper, build_mlp, build_resnet
from .normalizers import Mode, NormalizerSpec, NormKind, normalize
from .tensor import SGD, Rng, SgdConfig, Tensor, backward, kaiming_init

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FormatError",
    "InvalidStateError",
    "Mode",
    "NoMoreParams",
    "NonFiniteError",
    "NormKind",
    "NormalizerSpec",
    "NumericalSingularityError",
    "ResidualBlock",
    "Rng",
    "SGD",
    "SgdConfig",
    "ShapeError",
    "Tensor",
    "Wrapper",
    "backward",
    "build_mlp",
    "build_resnet",
    "kaiming_init",
    "normalize",
]
