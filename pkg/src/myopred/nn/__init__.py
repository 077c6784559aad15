"""Small numpy-backed reverse-mode differentiation core."""

from . import functional
from .functional import (
    batch_norm,
    bce_loss,
    concat,
    conv2d,
    global_avg_pool,
    guided_relu,
    linear,
    lstm_cell,
    max_pool2d,
    mse_loss,
    relu,
    sigmoid,
    stack,
    tanh,
)
from .gradcheck import grad_check, relative_error
from .layers import BasicBlock, BatchNorm2d, Conv2d, Linear, LSTMCell, Module, Parameter
from .optim import Adam
from .tensor import NonFiniteError, Tensor, as_tensor, no_grad

__all__ = [
    "Adam", "BasicBlock", "BatchNorm2d", "Conv2d", "Linear", "LSTMCell", "Module",
    "NonFiniteError", "Parameter", "Tensor", "as_tensor", "batch_norm", "bce_loss",
    "concat", "conv2d", "functional", "global_avg_pool", "grad_check", "guided_relu",
    "linear", "lstm_cell", "max_pool2d", "mse_loss", "no_grad", "relative_error",
    "relu", "sigmoid", "stack", "tanh",
]
