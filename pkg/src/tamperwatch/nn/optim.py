"""Adam update and global-norm gradient clipping over named parameter dicts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, NumericFailure


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if np.isfinite(norm) and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   state: AdamState, hyper: AdamConfig = AdamConfig()) -> AdamState:
    """Apply one bias-corrected Adam update to ``params`` in place."""
    if params.keys() != grads.keys():
        raise InvalidArgument(f"gradient names {sorted(grads)} do not match params {sorted(params)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise InvalidArgument(f"gradient {name} shape {g.shape} != {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite gradient for parameter {name}")

    state.step += 1
    t = state.step
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * (g * g)
        params[name] -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return state
