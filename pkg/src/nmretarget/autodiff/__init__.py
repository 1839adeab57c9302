"""Small reverse-mode automatic differentiation engine over numpy arrays."""
from . import ops
from .gradcheck import GradCheckResult, check_gradients, primitive_cases
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward

__all__ = [
    "AdamState", "GradCheckResult", "Tape", "Tensor", "adam_step", "backward",
    "check_gradients", "ops", "primitive_cases",
]
