"""Training loop and per-frame anomaly scoring."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IngestError, InvalidArgument, NumericFailure, TrainingFailure
from ..nn.optim import AdamConfig, AdamState, clip_global_norm, optimizer_step
from ..seeding import derive_seed, make_rng
from .model import DetectorModel, loss_and_grads
from .windows import make_windows, window_indices

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: DetectorModel
    loss_history: list[float] = field(default_factory=list)


def _frame_array(frames) -> np.ndarray:
    arr = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    if arr.ndim != 3:
        raise InvalidArgument(f"frames must be (n, H, W), got {arr.shape}")
    return arr


def train(model: DetectorModel, frames, epochs: int | None = None,
          seed: int | None = None) -> TrainResult:
    """Fit ``model`` in place on clean frames, one window per Adam step.

    Windows are visited in temporal order every epoch. ``seed`` drives the
    VAE's latent sampling (initial weights come from the model's own seed).
    """
    frames = _frame_array(frames)
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    seed = cfg.seed if seed is None else seed
    rng = make_rng(derive_seed(seed, "latent-sampling")) if model.is_vae else None
    params = {"flat": model.flat}
    state = AdamState()
    hyper = AdamConfig(lr=cfg.lr)
    history = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for wi, win in enumerate(make_windows(frames, cfg.kind, cfg.context)):
            try:
                value, grads = loss_and_grads(model, win.inputs, win.targets, rng)
            except NumericFailure as exc:
                raise TrainingFailure(str(exc), epoch, wi) from exc
            bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                raise TrainingFailure(f"non-finite gradient for parameter {bad[0]}", epoch, wi)
            flat_grads = {"flat": model.flatten(grads)}
            clip_global_norm(flat_grads, cfg.grad_clip)
            try:
                optimizer_step(params, flat_grads, state, hyper)
            except NumericFailure as exc:
                raise TrainingFailure(str(exc), epoch, wi) from exc
            total += value
            count += 1
        history.append(total / count)
        log.info("%s epoch %d/%d loss %.6f", cfg.kind.value, epoch + 1, epochs, history[-1])
    return TrainResult(model, history)


@dataclass
class AnomalyScoreSeries:
    scores: np.ndarray    # float, NaN where unscored
    scored: np.ndarray    # bool

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def values(self) -> np.ndarray:
        return self.scores[self.scored]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_index", "score", "scored"])
            for i, (s, ok) in enumerate(zip(self.scores, self.scored)):
                w.writerow([i, repr(float(s)) if ok else "", int(ok)])

    @classmethod
    def from_csv(cls, path) -> "AnomalyScoreSeries":
        p = Path(path)
        if not p.is_file():
            raise IngestError(f"score file not found: {p}")
        scores, scored = [], []
        with open(p, newline="") as fh:
            for row in csv.DictReader(fh):
                ok = row["scored"] == "1"
                scored.append(ok)
                scores.append(float(row["score"]) if ok else np.nan)
        return cls(np.array(scores, dtype=np.float64), np.array(scored, dtype=bool))


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("TAMPERWATCH_THREADS", "1")))
    except ValueError:
        return 1


def score_frames(model: DetectorModel, frames,
                 threads: int | None = None) -> AnomalyScoreSeries:
    """Per-frame reconstruction MSE of the clamped model output.

    Predictor scores land on the predicted frame, interpolator scores on the
    missing frame, and AE/VAE window means on the window's last frame.
    """
    frames = _frame_array(frames)
    idx = window_indices(len(frames), model.kind, model.config.context)

    def one(w):
        out = np.clip(model.forward(frames[list(w.inputs)]).output, 0.0, 1.0)
        d = out - frames[list(w.targets)]
        return w.scored, float(np.mean(d * d))

    threads = _thread_count() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(w) for w in idx]
    scores = np.full(len(frames), np.nan)
    scored = np.zeros(len(frames), dtype=bool)
    for i, e in results:
        scores[i] = e
        scored[i] = True
    return AnomalyScoreSeries(scores, scored)
