from .model import (DetectorConfig, DetectorModel, forward_model, kl_to_unit_normal, loss,
                    loss_and_grads, mse)
from .training import AnomalyScoreSeries, TrainResult, score_frames, train
from .windows import DetectorKind, Window, WindowIndices, make_windows, window_indices

__all__ = [
    "AnomalyScoreSeries", "DetectorConfig", "DetectorKind", "DetectorModel", "TrainResult",
    "Window", "WindowIndices", "forward_model", "kl_to_unit_normal", "loss", "loss_and_grads",
    "make_windows", "mse", "score_frames", "train", "window_indices",
]
