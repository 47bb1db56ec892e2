"""Dense tensor arithmetic, reverse-mode differentiation and optimisation."""

from .optim import Adam, clip_grad_norm
from .params import Parameter, ParameterStore
from .tensor import Tape, Tensor, backward

__all__ = ["Adam", "Parameter", "ParameterStore", "Tape", "Tensor", "backward", "clip_grad_norm"]
