"""Minimal reverse-mode differentiation substrate."""

from . import checkpoint, ops
from .autograd import (
    DERIVATIVES,
    MissingDerivativeError,
    NonFiniteError,
    Parameter,
    Tensor,
    as_tensor,
    backward,
    no_grad,
    override_derivative,
    zero_grad,
)
from .conv import conv3d
from .gradcheck import GradCheckReport, grad_check
from .optim import SgdConfig, learning_rate, sgd_step

__all__ = [
    "DERIVATIVES",
    "GradCheckReport",
    "MissingDerivativeError",
    "NonFiniteError",
    "Parameter",
    "SgdConfig",
    "Tensor",
    "as_tensor",
    "backward",
    "checkpoint",
    "conv3d",
    "grad_check",
    "learning_rate",
    "no_grad",
    "ops",
    "override_derivative",
    "sgd_step",
    "zero_grad",
]
