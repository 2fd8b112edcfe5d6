"""Dense tensors, reverse-mode differentiation, linalg kernels, optimizers."""

from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    exp,
    gradients,
    leaky_relu,
    log,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    power,
    reshape,
    sigmoid,
    softplus,
    sqrt,
    stack,
    sub,
    take,
    take_rows,
    transpose,
    tsum,
    zero_grads,
)
from .linalg import cholesky, solve_triangular_lower
from .conv import conv2d, conv2d_transpose
from .optim import Adam, Optimizer, Sgd, make_optimizer
from .gradcheck import (
    check_gradient,
    finite_difference_gradient,
    gradient_relative_error,
)

__all__ = [
    "Adam",
    "Optimizer",
    "Sgd",
    "Tensor",
    "add",
    "as_tensor",
    "check_gradient",
    "cholesky",
    "concat",
    "conv2d",
    "conv2d_transpose",
    "div",
    "exp",
    "finite_difference_gradient",
    "gradient_relative_error",
    "gradients",
    "leaky_relu",
    "log",
    "logsumexp",
    "make_optimizer",
    "matmul",
    "mean",
    "mul",
    "neg",
    "power",
    "reshape",
    "sigmoid",
    "softplus",
    "solve_triangular_lower",
    "sqrt",
    "stack",
    "sub",
    "take",
    "take_rows",
    "transpose",
    "tsum",
    "zero_grads",
]
