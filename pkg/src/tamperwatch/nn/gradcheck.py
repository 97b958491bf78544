"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import InvalidArgument, NumericFailure
from ..seeding import make_rng
from .cell import CellState, ConvLstmCellParams, cell_backward, cell_forward

LossAndGrads = Callable[[], tuple[float, dict[str, np.ndarray]]]

MAX_CHECKED_PARAMS = 5000


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(params: dict[str, np.ndarray], loss_and_grads: LossAndGrads,
                   eps: float = 1e-5, floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads`` must read ``params`` (mutated in place here) and return
    the scalar loss together with gradients keyed like ``params``. Every
    entry is restored before returning. ``floor`` bounds the denominator of
    the relative error from below.
    """
    total = sum(p.size for p in params.values())
    if total > MAX_CHECKED_PARAMS:
        raise InvalidArgument(f"{total} parameters is too many for a finite-difference sweep")
    loss, analytic = loss_and_grads()
    if not np.isfinite(loss):
        raise NumericFailure(f"loss is not finite: {loss}")
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp, _ = loss_and_grads()
            flat[j] = orig - eps
            lm, _ = loss_and_grads()
            flat[j] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericFailure(f"loss is not finite while perturbing {name}[{j}]")
            numeric[j] = (lp - lm) / (2.0 * eps)
        err = relative_error(analytic[name].reshape(-1), numeric, floor)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


def sequence_mse_problem(seed: int, timesteps: int = 2, in_channels: int = 1,
                         hidden: int = 8, height: int = 4, width: int = 4, k: int = 3,
                         grad_scale: float = 1.0):
    """An unrolled single-cell ConvLSTM with MSE on the last hidden map.

    Returns ``(params, loss_and_grads)`` ready for :func:`gradient_check`.
    Peepholes and biases get random values too so every path carries
    gradient. ``grad_scale`` != 1 deliberately corrupts the analytic
    gradients (used to prove the checker can fail).
    """
    rng = make_rng(seed)
    cell = ConvLstmCellParams.zeros(in_channels, hidden, k, height, width)
    for arr in cell.named().values():
        arr[...] = rng.uniform(-0.5, 0.5, arr.shape)
    xs = rng.uniform(0.0, 1.0, (timesteps, in_channels, height, width))
    target = rng.uniform(-0.5, 0.5, (hidden, height, width))
    params = cell.named()

    def loss_and_grads():
        state = CellState.zeros(hidden, height, width)
        caches = []
        for t in range(timesteps):
            state, cache = cell_forward(xs[t], state, cell)
            caches.append(cache)
        diff = state.h - target
        loss = float(np.mean(diff * diff))
        dh = 2.0 * diff / diff.size
        dc = np.zeros_like(dh)
        grads = {name: np.zeros_like(a) for name, a in params.items()}
        for cache in reversed(caches):
            g, _, prev = cell_backward(dh, dc, cache, cell)
            for name in grads:
                grads[name] += g[name]
            dh, dc = prev.h, prev.c
        if grad_scale != 1.0:
            grads = {n: v * grad_scale for n, v in grads.items()}
        return loss, grads

    return params, loss_and_grads
