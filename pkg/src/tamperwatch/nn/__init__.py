from .cell import CellCache, CellState, ConvLstmCellParams, cell_backward, cell_forward
from .conv import ConvKernel, conv2d_same, conv2d_same_backward
from .gradcheck import gradient_check
from .ops import hadamard, sigmoid, tanh_map
from .optim import AdamConfig, AdamState, clip_global_norm, optimizer_step

__all__ = [
    "AdamConfig", "AdamState", "CellCache", "CellState", "ConvKernel", "ConvLstmCellParams",
    "cell_backward", "cell_forward", "clip_global_norm", "conv2d_same", "conv2d_same_backward",
    "gradient_check", "hadamard", "optimizer_step", "sigmoid", "tanh_map",
]
