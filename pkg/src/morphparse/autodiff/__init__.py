"""Minimal dense reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .core import (
    Node,
    Parameter,
    as_node,
    backward,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)
from .optim import Adam

__all__ = [
    "Adam",
    "Node",
    "Parameter",
    "as_node",
    "backward",
    "default_dtype",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "set_default_dtype",
]
