"""Minimal reverse-mode differentiation engine used by the model zoo."""
from .gradcheck import check_gradients, numerical_grad, relative_error
from .ops import (
    DegenerateWeightError, ShapeError, add, concat, div, embedding, exp, getitem, haversine,
    l2_norm, log, matmul, mean, mul, power, relu, reshape, sigmoid, softmax, sqrt, stack, sub,
    sum, swapaxes, tanh, weight_norm,
)
from .tensor import (
    Graph, NonFiniteError, Tensor, as_tensor, backward, get_default_dtype, no_grad, set_debug,
    set_default_dtype, zero_grad,
)
