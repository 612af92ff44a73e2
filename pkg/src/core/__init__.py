# src/core/__init__.py
from .tensor import (
    Array, Parameter, no_grad, is_grad_enabled, as_array,
    add, sub, mul, div, neg, exp, log, sqrt, tanh, relu, absolute,
    sum_, mean, transpose, swapaxes, reshape, concatenate,
    matmul, softmax, log_softmax, layer_norm, LAYER_NORM_EPS,
)
from .gradcheck import grad_check
from .module import Linear, ParamGroup, uniform_init
from .optim import Adam, AdamState, adam_step

__all__ = [
    'Array', 'Parameter', 'no_grad', 'is_grad_enabled', 'as_array',
    'add', 'sub', 'mul', 'div', 'neg', 'exp', 'log', 'sqrt', 'tanh', 'relu', 'absolute',
    'sum_', 'mean', 'transpose', 'swapaxes', 'reshape', 'concatenate',
    'matmul', 'softmax', 'log_softmax', 'layer_norm', 'LAYER_NORM_EPS', 'grad_check',
    'Linear', 'ParamGroup', 'uniform_init', 'Adam', 'AdamState', 'adam_step',
]
