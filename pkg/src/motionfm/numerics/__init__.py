from . import autodiff
from .autodiff import Node, Tape, forward_backward
from .checkpoint import decode_params, encode_params, load_params, save_params
from .linalg import matrix_sqrt_psd
from .optim import OptimizerState, init_state, optimizer_step

__all__ = [
    "Node",
    "OptimizerState",
    "Tape",
    "autodiff",
    "decode_params",
    "encode_params",
    "forward_backward",
    "init_state",
    "load_params",
    "matrix_sqrt_psd",
    "optimizer_step",
    "save_params",
]
