"""Same-padded 2-D convolution on (channels, height, width) float64 maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass
class ConvKernel:
    """Weights of shape (out, in, k, k) and one bias per output channel."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise InvalidArgument(f"kernel weights must be (out, in, k, k), got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise InvalidArgument(f"kernel side must be odd, got {w.shape[2]}")
        if self.bias.shape != (w.shape[0],):
            raise InvalidArgument(
                f"bias shape {self.bias.shape} does not match out_channels {w.shape[0]}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Unfold a zero-padded (C, H, W) map into a (C*k*k, H*W) patch matrix."""
    c, h, w = x.shape
    p = k // 2
    if p == 0:
        return x.reshape(c, h * w)
    xp = np.zeros((c, h + 2 * p, w + 2 * p))
    xp[:, p:p + h, p:p + w] = x
    cols = np.empty((c, k, k, h, w))
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, i:i + h, j:j + w]
    return cols.reshape(c * k * k, h * w)


def conv2d_same(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    if x.ndim != 3 or x.shape[0] != kernel.in_channels:
        raise InvalidArgument(
            f"input shape {x.shape} incompatible with kernel shape {kernel.weights.shape}")
    out, _ = conv2d_same_cols(x, kernel.weights, kernel.bias)
    return out


def conv2d_same_cols(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Convolution that also returns the patch matrix for reuse in backward."""
    o, _, k, _ = weights.shape
    _, h, w = x.shape
    cols = im2col(x, k)
    out = weights.reshape(o, -1) @ cols
    out += bias[:, None]
    return out.reshape(o, h, w), cols


def col2im(cols: np.ndarray, channels: int, k: int, h: int, w: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch columns back onto the map."""
    p = k // 2
    if p == 0:
        return cols.reshape(channels, h, w)
    c5 = cols.reshape(channels, k, k, h, w)
    xp = np.zeros((channels, h + 2 * p, w + 2 * p))
    for i in range(k):
        for j in range(k):
            xp[:, i:i + h, j:j + w] += c5[:, i, j]
    return xp[:, p:p + h, p:p + w]


def conv2d_same_backward(dout: np.ndarray, weights: np.ndarray, cols: np.ndarray,
                         need_input_grad: bool = True):
    """Gradients of a same convolution with respect to weights, bias and input."""
    o, c, k, _ = weights.shape
    _, h, w = dout.shape
    d2 = dout.reshape(o, -1)
    dw = (d2 @ cols.T).reshape(weights.shape)
    db = d2.sum(axis=1)
    dx = None
    if need_input_grad:
        dx = col2im(weights.reshape(o, -1).T @ d2, c, k, h, w)
    return dw, db, dx
