from .gradcheck import GradCheckReport, grad_check, numerical_grad, relative_error
from .kernels import BACKEND
from .ops import conv2d, cross_stitch, dense, maxpool2d, softmax_cross_entropy
from .optim import Adam, NonFiniteGradientError, Sgd, make_optimizer, zero_grad
from .prng import Prng, he_normal
from .tensor import (
    ShapeError,
    Tensor,
    backward,
    concat_rows,
    exp,
    flatten,
    log,
    log1p,
    relu,
    reshape,
    rows,
    square,
    stack_scalars,
    take,
    total,
)

__all__ = [
    "Adam", "BACKEND", "GradCheckReport", "NonFiniteGradientError", "Prng", "Sgd", "ShapeError",
    "Tensor", "backward", "concat_rows", "conv2d", "cross_stitch", "dense", "exp", "flatten",
    "grad_check", "he_normal", "log", "log1p", "make_optimizer", "maxpool2d", "numerical_grad",
    "relative_error", "relu", "reshape", "rows", "softmax_cross_entropy", "square", "stack_scalars",
    "take", "total", "zero_grad",
]
