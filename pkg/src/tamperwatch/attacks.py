"""Physical-tamper transforms and their scheduling onto clean footage."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, InvalidConfig
from .scene import FrameSequence
from .seeding import make_rng


class AttackKind(str, enum.Enum):
    BLOCK = "block"
    ZOOM = "zoom"
    BLUR = "blur"
    SHIFT = "shift"


@dataclass
class AttackSpec:
    kind: AttackKind
    mask_value: float = 0.0
    zoom_factor: float = 1.5
    kernel_size: int = 5
    sigma: float = 1.5
    dx: int = 4
    n_instances: int = 10
    instance_duration: int = 2
    seed: int = 0

    def __post_init__(self):
        self.kind = AttackKind(self.kind)

    def validate(self, margin: int | None = None) -> None:
        if not 0.0 <= self.mask_value <= 1.0:
            raise InvalidConfig(f"mask_value {self.mask_value} outside [0, 1]")
        if self.zoom_factor <= 1.0:
            raise InvalidConfig(f"zoom_factor must exceed 1, got {self.zoom_factor}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise InvalidConfig(f"blur kernel_size must be odd and >= 3, got {self.kernel_size}")
        if self.sigma <= 0:
            raise InvalidConfig(f"blur sigma must be positive, got {self.sigma}")
        if self.dx <= 0 or (margin is not None and self.dx > margin):
            raise InvalidConfig(f"shift dx={self.dx} must lie in (0, margin={margin}]")
        if self.n_instances < 0 or self.instance_duration < 1:
            raise InvalidConfig("n_instances must be >= 0 and instance_duration >= 1")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown attack fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LabeledDataset:
    frames: FrameSequence
    labels: np.ndarray          # bool, one per frame
    spec: AttackSpec
    starts: list[int]


def apply_block(frame: np.ndarray, mask_value: float = 0.0) -> np.ndarray:
    return np.full_like(frame, mask_value, dtype=np.float64)


def apply_zoom(frame: np.ndarray, factor: float) -> np.ndarray:
    """Centre crop of side/factor, blown back up with nearest-neighbour."""
    if factor <= 1.0:
        raise InvalidArgument(f"zoom factor must exceed 1, got {factor}")
    h, w = frame.shape
    ch, cw = int(math.floor(h / factor + 0.5)), int(math.floor(w / factor + 0.5))
    if ch < 2 or cw < 2:
        raise InvalidArgument(f"zoom {factor} leaves a {ch}x{cw} crop of a {h}x{w} frame")
    top, left = (h - ch) // 2, (w - cw) // 2
    rows = top + (np.arange(h) * ch) // h
    cols = left + (np.arange(w) * cw) // w
    return frame[np.ix_(rows, cols)].copy()


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def apply_blur(frame: np.ndarray, kernel_size: int = 5, sigma: float = 1.5) -> np.ndarray:
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise InvalidArgument(f"kernel_size must be odd, got {kernel_size}")
    if sigma <= 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    k = gaussian_kernel(kernel_size, sigma)
    p = kernel_size // 2
    padded = np.pad(frame, p, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, k.shape)
    return np.clip(np.einsum("ijkl,kl->ij", win, k), 0.0, 1.0)


def apply_shift(source: np.ndarray, margin: int, dx: int,
                view_shape: tuple[int, int] | None = None) -> np.ndarray:
    """View window moved ``dx`` pixels left inside the margin-padded source."""
    if dx < 0 or dx > margin:
        raise InvalidArgument(f"shift dx={dx} must lie in [0, margin={margin}]")
    hs, ws = source.shape
    h, w = view_shape if view_shape is not None else (hs - 2 * margin, ws - 2 * margin)
    left = margin - dx
    return source[margin:margin + h, left:left + w].copy()


def _place_instances(n: int, duration: int, first: int, last: int, gap: int,
                     rng: np.random.Generator) -> list[int]:
    """Uniformly random non-overlapping windows inside [first, last].

    Consecutive windows are separated by at least ``gap`` untouched frames.
    """
    if n == 0:
        return []
    span = last - first + 1
    free = span - n * duration - (n - 1) * gap
    if free < 0:
        raise InvalidConfig(
            f"cannot place {n} instances of {duration} frames in {span} eligible frames")
    picks = np.sort(rng.choice(free + n, size=n, replace=False))
    return [int(first + v + i * (duration + gap - 1)) for i, v in enumerate(picks)]


def schedule_attacks(view: FrameSequence, spec: AttackSpec, source: FrameSequence | None = None,
                     margin: int | None = None, warmup: int = 5, tail: int = 1,
                     gap: int = 1) -> LabeledDataset:
    """Tamper ``spec.n_instances`` random windows and label them.

    Instances avoid the first ``warmup`` frames (detector context) and the
    last ``tail`` frames, and are separated by ``gap`` clean frames. Shift
    needs the margin-padded ``source`` footage.
    """
    spec.validate(margin if spec.kind is AttackKind.SHIFT else None)
    n = len(view)
    rng = make_rng(spec.seed)
    starts = _place_instances(spec.n_instances, spec.instance_duration,
                              warmup, n - 1 - tail, gap, rng)
    frames = view.frames.copy()
    labels = np.zeros(n, dtype=bool)
    if spec.kind is AttackKind.SHIFT and starts:
        if source is None or margin is None:
            raise InvalidConfig("shift attack needs the source footage and its margin")
        if len(source) != n:
            raise InvalidConfig(f"source has {len(source)} frames, view has {n}")
    for s in starts:
        for t in range(s, s + spec.instance_duration):
            labels[t] = True
            if spec.kind is AttackKind.BLOCK:
                frames[t] = apply_block(frames[t], spec.mask_value)
            elif spec.kind is AttackKind.ZOOM:
                frames[t] = apply_zoom(frames[t], spec.zoom_factor)
            elif spec.kind is AttackKind.BLUR:
                frames[t] = apply_blur(frames[t], spec.kernel_size, spec.sigma)
            else:
                frames[t] = apply_shift(source.frames[t], margin, spec.dx, view.shape)
    return LabeledDataset(FrameSequence(frames, view.frame_period), labels, spec, starts)
