"""Tensor substrate: taped reverse-mode autodiff over numpy arrays."""

from . import functional
from .gradcheck import GradcheckReport, gradcheck, relative_error
from .optim import AdamW, cosine_lr
from .nn import BatchNorm2d, Conv2d, LayerNorm, Linear, Module, ModuleList, Parameter
from .tensor import (
    DimensionError,
    NumericError,
    Tensor,
    as_tensor,
    default_dtype,
    finite_checks,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "AdamW",
    "BatchNorm2d",
    "Conv2d",
    "DimensionError",
    "GradcheckReport",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "NumericError",
    "Parameter",
    "Tensor",
    "as_tensor",
    "cosine_lr",
    "default_dtype",
    "finite_checks",
    "functional",
    "get_default_dtype",
    "gradcheck",
    "is_grad_enabled",
    "no_grad",
    "relative_error",
    "set_default_dtype",
]
