"""Sliding context windows for the four detector kinds."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import InvalidArgument


class DetectorKind(str, enum.Enum):
    AE = "ae"
    PREDICTOR = "predictor"
    INTERPOLATOR = "interpolator"
    VAE = "vae"

    @property
    def reconstructs_window(self) -> bool:
        return self in (DetectorKind.AE, DetectorKind.VAE)


@dataclass(frozen=True)
class WindowIndices:
    inputs: tuple[int, ...]
    targets: tuple[int, ...]
    scored: int   # frame that receives this window's score


@dataclass
class Window:
    inputs: np.ndarray    # (n_in, H, W)
    targets: np.ndarray   # (n_out, H, W)
    scored: int


def window_indices(n: int, kind: DetectorKind, context: int) -> list[WindowIndices]:
    """Stride-1 windows over a sequence of ``n`` frames with context length J.

    * predictor:    x[t-J..t]            -> x[t+1]
    * interpolator: x[t-J..t-2] + x[t]   -> x[t-1]   (x[t-1] never read)
    * ae / vae:     x[t-J..t]            -> x[t-J..t], scored at t
    """
    kind = DetectorKind(kind)
    J = context
    if J < 1 or (kind is DetectorKind.INTERPOLATOR and J < 2):
        raise InvalidArgument(f"context length J={J} too small for {kind.value}")
    if n <= J + 1:
        raise InvalidArgument(f"sequence of {n} frames too short for J={J} (needs > {J + 1})")
    out = []
    if kind is DetectorKind.PREDICTOR:
        for t in range(J, n - 1):
            out.append(WindowIndices(tuple(range(t - J, t + 1)), (t + 1,), t + 1))
    elif kind is DetectorKind.INTERPOLATOR:
        for t in range(J, n):
            out.append(WindowIndices(tuple(range(t - J, t - 1)) + (t,), (t - 1,), t - 1))
    else:
        for t in range(J, n):
            idx = tuple(range(t - J, t + 1))
            out.append(WindowIndices(idx, idx, t))
    return out


def make_windows(frames: np.ndarray, kind: DetectorKind, context: int) -> Iterator[Window]:
    for w in window_indices(len(frames), kind, context):
        yield Window(frames[list(w.inputs)], frames[list(w.targets)], w.scored)
