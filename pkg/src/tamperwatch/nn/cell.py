"""ConvLSTM cell with peephole connections, forward and analytic backward.

Gate equations, with ``*`` a same-padded convolution and ``o`` the
elementwise product::

    i_t = sigmoid(Wxi * x_t + Whi * h_{t-1} + wci o c_{t-1} + b_i)
    f_t = sigmoid(Wxf * x_t + Whf * h_{t-1} + wcf o c_{t-1} + b_f)
    g_t = tanh(Wxc * x_t + Whc * h_{t-1} + b_c)
    c_t = f_t o c_{t-1} + i_t o g_t
    o_t = sigmoid(Wxo * x_t + Who * h_{t-1} + wco o c_t + b_o)
    h_t = o_t o tanh(c_t)

Gate kernels are stacked along the output axis in the order i, f, c, o.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InternalConsistencyError, InvalidArgument
from .conv import conv2d_same_backward, conv2d_same_cols
from .ops import sigmoid

GATES = ("i", "f", "c", "o")


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "CellState":
        return cls(np.zeros((channels, height, width)), np.zeros((channels, height, width)))


@dataclass
class ConvLstmCellParams:
    wx: np.ndarray   # (4*hidden, in_channels, k, k)
    wh: np.ndarray   # (4*hidden, hidden, k, k)
    b: np.ndarray    # (4*hidden,)
    wci: np.ndarray  # (hidden, H, W)
    wcf: np.ndarray
    wco: np.ndarray

    def __post_init__(self):
        hid = self.hidden_channels
        if self.wx.shape[0] != 4 * hid or self.b.shape != (4 * hid,):
            raise InvalidArgument(
                f"input kernel {self.wx.shape} / bias {self.b.shape} inconsistent with "
                f"hidden_channels={hid}")
        if self.wh.shape != (4 * hid, hid, self.k, self.k):
            raise InvalidArgument(f"recurrent kernel shape {self.wh.shape} is not square in hidden")
        if self.wx.shape[2:] != (self.k, self.k) or self.k % 2 == 0:
            raise InvalidArgument(f"kernel side must be odd and shared, got {self.wx.shape}")
        for name in ("wci", "wcf", "wco"):
            p = getattr(self, name)
            if p.ndim != 3 or p.shape[0] != hid or p.shape != self.wci.shape:
                raise InvalidArgument(f"peephole {name} has shape {p.shape}")

    @property
    def hidden_channels(self) -> int:
        return self.wh.shape[1]

    @property
    def in_channels(self) -> int:
        return self.wx.shape[1]

    @property
    def k(self) -> int:
        return self.wh.shape[2]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.wci.shape[1:]

    def named(self) -> dict[str, np.ndarray]:
        return {"wx": self.wx, "wh": self.wh, "b": self.b,
                "wci": self.wci, "wcf": self.wcf, "wco": self.wco}

    @classmethod
    def zeros(cls, in_channels, hidden, k, height, width) -> "ConvLstmCellParams":
        return cls(
            wx=np.zeros((4 * hidden, in_channels, k, k)),
            wh=np.zeros((4 * hidden, hidden, k, k)),
            b=np.zeros(4 * hidden),
            wci=np.zeros((hidden, height, width)),
            wcf=np.zeros((hidden, height, width)),
            wco=np.zeros((hidden, height, width)),
        )

    @classmethod
    def init(cls, in_channels, hidden, k, height, width,
             rng: np.random.Generator, forget_bias: float = 1.0) -> "ConvLstmCellParams":
        """Uniform +-1/sqrt(fan_in) gate kernels; peepholes start at zero."""
        p = cls.zeros(in_channels, hidden, k, height, width)
        for g in range(4):
            rows = slice(g * hidden, (g + 1) * hidden)
            bx = 1.0 / np.sqrt(in_channels * k * k)
            bh = 1.0 / np.sqrt(hidden * k * k)
            p.wx[rows] = rng.uniform(-bx, bx, p.wx[rows].shape)
            p.wh[rows] = rng.uniform(-bh, bh, p.wh[rows].shape)
        p.b[hidden:2 * hidden] = forget_bias
        return p


@dataclass
class CellCache:
    x: np.ndarray
    prev: CellState
    cols: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray


def _stacked_kernel(params: ConvLstmCellParams) -> np.ndarray:
    return np.concatenate([params.wx, params.wh], axis=1)


def cell_forward(x: np.ndarray, prev: CellState, params: ConvLstmCellParams):
    """One timestep. Returns ``(next_state, cache)``."""
    hid = params.hidden_channels
    if x.ndim != 3 or x.shape[0] != params.in_channels:
        raise InvalidArgument(
            f"input {x.shape} does not have {params.in_channels} channels")
    if x.shape[1:] != prev.h.shape[1:] or prev.h.shape != prev.c.shape:
        raise InvalidArgument(f"input {x.shape} and state {prev.h.shape} disagree spatially")
    if prev.h.shape != (hid, *params.spatial):
        raise InvalidArgument(
            f"state shape {prev.h.shape} does not match params ({hid}, {params.spatial})")

    z, cols = conv2d_same_cols(np.concatenate([x, prev.h]), _stacked_kernel(params), params.b)
    zi, zf, zg, zo = z[:hid], z[hid:2 * hid], z[2 * hid:3 * hid], z[3 * hid:]
    i = sigmoid(zi + params.wci * prev.c)
    f = sigmoid(zf + params.wcf * prev.c)
    g = np.tanh(zg)
    c = f * prev.c + i * g
    o = sigmoid(zo + params.wco * c)
    tc = np.tanh(c)
    h = o * tc
    return CellState(h, c), CellCache(x, prev, cols, i, f, g, o, c, tc)


def cell_backward(grad_h: np.ndarray, grad_c: np.ndarray, cache: CellCache,
                  params: ConvLstmCellParams, need_input_grad: bool = True):
    """Backpropagate through one timestep.

    ``grad_h`` and ``grad_c`` are loss gradients with respect to the
    emitted ``h_t`` and ``c_t`` (the latter coming from the next step).
    Returns ``(grads, grad_x, grad_prev_state)`` where ``grads`` mirrors
    :meth:`ConvLstmCellParams.named`.
    """
    hid = params.hidden_channels
    if cache.c.shape != (hid, *params.spatial) or cache.x.shape[0] != params.in_channels:
        raise InternalConsistencyError(
            f"cache shapes {cache.x.shape}/{cache.c.shape} do not belong to these params")
    if grad_h.shape != cache.c.shape or grad_c.shape != cache.c.shape:
        raise InvalidArgument(f"upstream gradient shape {grad_h.shape} != state {cache.c.shape}")

    i, f, g, o, tc, c_prev = cache.i, cache.f, cache.g, cache.o, cache.tc, cache.prev.c
    dzo = grad_h * tc * o * (1.0 - o)
    dc = grad_c + grad_h * o * (1.0 - tc * tc) + dzo * params.wco
    dzi = dc * g * i * (1.0 - i)
    dzf = dc * c_prev * f * (1.0 - f)
    dzg = dc * i * (1.0 - g * g)
    dc_prev = dc * f + dzi * params.wci + dzf * params.wcf

    dz = np.concatenate([dzi, dzf, dzg, dzo])
    dw, db, dxh = conv2d_same_backward(dz, _stacked_kernel(params), cache.cols,
                                       need_input_grad=True)
    cin = params.in_channels
    grads = {
        "wx": dw[:, :cin], "wh": dw[:, cin:], "b": db,
        "wci": dzi * c_prev, "wcf": dzf * c_prev, "wco": dzo * cache.c,
    }
    dx = dxh[:cin] if need_input_grad else None
    return grads, dx, CellState(dxh[cin:], dc_prev)
