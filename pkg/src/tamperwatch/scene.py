"""Synthetic train-carriage footage, PGM frame I/O and train/test splitting.

Frames are 2-D float64 arrays in [0, 1]; a sequence is stored as one
``(n_frames, height, width)`` array.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestError, InvalidArgument, InvalidConfig
from .seeding import make_rng


@dataclass
class FrameSequence:
    frames: np.ndarray
    frame_period: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise InvalidArgument(f"frames must be (n, height, width), got {self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]


@dataclass
class SceneConfig:
    height: int = 32
    width: int = 48
    margin: int = 8
    max_shift: int = 8
    passengers: tuple[int, int] = (1, 3)
    passenger_speed: tuple[float, float] = (0.4, 1.2)
    window_rows: tuple[int, int] = (5, 13)   # view rows [top, bottom)
    texture_period: int = 24
    scroll_speed: int = 1                    # pixels per tick
    seed: int = 0

    def __post_init__(self):
        self.passengers = tuple(self.passengers)
        self.passenger_speed = tuple(self.passenger_speed)
        self.window_rows = tuple(self.window_rows)

    def validate(self) -> None:
        if self.margin < self.max_shift:
            raise InvalidConfig(f"margin {self.margin} < max_shift {self.max_shift}")
        if self.height < 4 or self.width < 4:
            raise InvalidConfig(f"view {self.height}x{self.width} is too small")
        lo, hi = self.passengers
        if not 0 <= lo <= hi:
            raise InvalidConfig(f"passenger count range {self.passengers} is invalid")
        if not 0 < self.passenger_speed[0] <= self.passenger_speed[1]:
            raise InvalidConfig(f"passenger speed range {self.passenger_speed} is invalid")
        top, bottom = self.window_rows
        if not 0 <= top < bottom <= self.height:
            raise InvalidConfig(f"window rows {self.window_rows} outside the view")
        if self.texture_period < 2 or self.scroll_speed < 0:
            raise InvalidConfig("texture_period must be >= 2 and scroll_speed >= 0")

    @property
    def source_shape(self) -> tuple[int, int]:
        return self.height + 2 * self.margin, self.width + 2 * self.margin

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise InvalidConfig(f"unknown scene fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class _Passenger:
    x: float
    y: float
    rx: float
    ry: float
    shade: float
    velocity: float
    wait: int = 0


def _background(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    hs, ws = cfg.source_shape
    m = cfg.margin
    yy = np.arange(hs)[:, None] / max(hs - 1, 1)
    bg = np.broadcast_to(0.55 + 0.2 * yy, (hs, ws)).copy()
    bg[: m + 2, :] = 0.25  # ceiling
    top, bottom = cfg.window_rows[0] + m, cfg.window_rows[1] + m
    bg[max(top - 1, 0), :] = 0.1
    bg[min(bottom, hs - 1), :] = 0.1
    seat_top = m + int(0.65 * cfg.height)
    for x0 in range(2, ws, 13):
        bg[seat_top:seat_top + 6, x0:x0 + 8] = 0.35
        bg[seat_top + 6:, x0 + 1:x0 + 7] = 0.3
    for x0 in range(9, ws, 21):
        bg[m:, x0] = 0.92  # grab poles
    bg += rng.uniform(-0.03, 0.03, bg.shape)
    return bg


def _window_texture(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    rows = cfg.window_rows[1] - cfg.window_rows[0]
    tex = rng.uniform(0.0, 1.0, (rows, cfg.texture_period))
    tex = (np.roll(tex, 1, axis=1) + 2 * tex + np.roll(tex, -1, axis=1)) / 4.0
    return 0.35 + 0.6 * tex


def window_band(texture: np.ndarray, width: int, scroll_speed: int, tick: int) -> np.ndarray:
    """Band of ``width`` columns at ``tick``; periodic in tick with period ``P / s``."""
    period = texture.shape[1]
    cols = (np.arange(width) + scroll_speed * tick) % period
    return texture[:, cols]


def _spawn(cfg: SceneConfig, rng: np.random.Generator, anywhere: bool) -> _Passenger:
    hs, ws = cfg.source_shape
    rx = rng.uniform(3.0, 5.0)
    ry = rng.uniform(5.0, 8.0)
    speed = rng.uniform(*cfg.passenger_speed)
    direction = 1.0 if rng.uniform() < 0.5 else -1.0
    y = rng.uniform(cfg.margin + 0.45 * cfg.height, cfg.margin + 0.85 * cfg.height)
    shade = rng.uniform(0.08, 0.3)
    if anywhere:
        x = rng.uniform(0, ws)
    else:
        x = -rx - 1.0 if direction > 0 else ws + rx + 1.0
    return _Passenger(x, y, rx, ry, shade, direction * speed)


def _draw(frame: np.ndarray, p: _Passenger, xx: np.ndarray, yy: np.ndarray) -> None:
    d = np.sqrt(((xx - p.x) / p.rx) ** 2 + ((yy - p.y) / p.ry) ** 2)
    alpha = np.clip((1.15 - d) / 0.3, 0.0, 1.0)
    frame *= 1.0 - alpha
    frame += alpha * p.shade


def generate_scene(cfg: SceneConfig, n_frames: int) -> tuple[FrameSequence, FrameSequence]:
    """Render ``n_frames`` ticks; returns ``(source, view)``.

    The source frames carry ``margin`` extra pixels on every side; the view
    is their centred crop.
    """
    cfg.validate()
    if n_frames < 1:
        raise InvalidArgument(f"n_frames must be >= 1, got {n_frames}")
    rng = make_rng(cfg.seed)
    hs, ws = cfg.source_shape
    m = cfg.margin
    bg = _background(cfg, rng)
    texture = _window_texture(cfg, rng)
    lo, hi = cfg.passengers
    count = int(rng.integers(lo, hi + 1))
    people = [_spawn(cfg, rng, anywhere=True) for _ in range(count)]
    yy, xx = np.mgrid[0:hs, 0:ws].astype(np.float64)
    top, bottom = cfg.window_rows[0] + m, cfg.window_rows[1] + m

    source = np.empty((n_frames, hs, ws))
    for t in range(n_frames):
        frame = bg.copy()
        frame[top:bottom, :] = window_band(texture, ws, cfg.scroll_speed, t)
        for i, p in enumerate(people):
            if p.wait > 0:
                p.wait -= 1
                continue
            _draw(frame, p, xx, yy)
            p.x += p.velocity
            if p.x < -p.rx - 2.0 or p.x > ws + p.rx + 2.0:
                fresh = _spawn(cfg, rng, anywhere=False)
                fresh.wait = int(rng.integers(0, 40))
                people[i] = fresh
        np.clip(frame, 0.0, 1.0, out=frame)
        source[t] = frame
    view = source[:, m:m + cfg.height, m:m + cfg.width].copy()
    return FrameSequence(source), FrameSequence(view)


def save_frames(seq: FrameSequence, path) -> list[Path]:
    """Write one 8-bit binary PGM per frame, named by zero-padded index."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(seq) - 1)))
    written = []
    for i, frame in enumerate(seq.frames):
        q = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        p = out / f"{i:0{width}d}.pgm"
        Image.fromarray(q, mode="L").save(p, format="PPM")
        written.append(p)
    return written


def load_frames(path) -> FrameSequence:
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"frame directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise IngestError(f"no .pgm files in {root}")
    frames = []
    for f in files:
        try:
            with Image.open(f) as im:
                if im.mode != "L":
                    raise IngestError(f"{f.name}: expected 8-bit grayscale, got mode {im.mode}")
                arr = np.asarray(im, dtype=np.float64) / 255.0
        except OSError as exc:
            if isinstance(exc, IngestError):
                raise
            raise IngestError(f"cannot read {f}: {exc}") from exc
        if frames and arr.shape != frames[0].shape:
            raise IngestError(
                f"{f.name} has dimensions {arr.shape}, expected {frames[0].shape}")
        frames.append(arr)
    return FrameSequence(np.stack(frames))


def split_point(n: int, ratio: float) -> int:
    """Half-up rounded ``ratio * n``."""
    return int(math.floor(ratio * n + 0.5))


def split_train_test(seq: FrameSequence, ratio: float = 0.9,
                     context: int | None = None) -> tuple[FrameSequence, FrameSequence]:
    """Contiguous temporal split; no shuffling.

    If ``context`` (the detectors' J) is given, the test part must hold at
    least ``context + 2`` frames.
    """
    if not 0.0 < ratio < 1.0:
        raise InvalidConfig(f"split ratio must lie in (0, 1), got {ratio}")
    k = split_point(len(seq), ratio)
    if context is not None and len(seq) - k < context + 2:
        raise InvalidConfig(
            f"test split has {len(seq) - k} frames, needs at least {context + 2}")
    return (FrameSequence(seq.frames[:k], seq.frame_period),
            FrameSequence(seq.frames[k:], seq.frame_period))


@dataclass
class DatasetManifest:
    n_frames: int
    height: int
    width: int
    seed: int
    split_index: int
    scene: dict = field(default_factory=dict)
    attack: dict | None = None

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        p = Path(path)
        if not p.is_file():
            raise IngestError(f"manifest not found: {p}")
        return cls(**json.loads(p.read_text()))
