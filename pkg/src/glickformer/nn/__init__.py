"""Minimal float64 neural-network core with exact backward passes."""
from .gradcheck import GradCheckReport, grad_check, relative_error
from .layers import (
    LN_EPS, FeedForward, LayerNorm, Linear, MultiHeadAttention, layer_norm,
    layer_norm_backward, linear, linear_backward, mish, mish_backward,
    multi_head_attention, softmax, softmax_backward,
)
from .params import (
    NumericError, Parameter, RngState, ShapeError, glorot_bound, init_parameter,
    load_parameters, save_parameters, unique_parameters,
)

__all__ = [
    "GradCheckReport", "grad_check", "relative_error",
    "LN_EPS", "FeedForward", "LayerNorm", "Linear", "MultiHeadAttention",
    "layer_norm", "layer_norm_backward", "linear", "linear_backward", "mish",
    "mish_backward", "multi_head_attention", "softmax", "softmax_backward",
    "NumericError", "Parameter", "RngState", "ShapeError", "glorot_bound",
    "init_parameter", "load_parameters", "save_parameters", "unique_parameters",
]
