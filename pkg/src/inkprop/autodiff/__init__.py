from .tensor import Tensor, concat, gather_rows, stack_rows
from .nnops import (
    bilinear_resize_const,
    bilinear_sample,
    conv2d,
    deformable_conv,
    segment_pool,
    upsample2x,
)
from .params import ParamStore, adam_step, he_uniform, load_params, save_params
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "concat",
    "gather_rows",
    "stack_rows",
    "conv2d",
    "bilinear_sample",
    "deformable_conv",
    "upsample2x",
    "segment_pool",
    "bilinear_resize_const",
    "ParamStore",
    "adam_step",
    "he_uniform",
    "load_params",
    "save_params",
    "grad_check",
]
