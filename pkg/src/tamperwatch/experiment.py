"""Experiment configuration and the file-based pipeline stages.

Every stage reads its inputs from, and writes its outputs under, one
experiment directory::

    data/<camera>/{frames,source}/*.pgm, manifest.json
    attacks/<camera>/<scenario>/frames/*.pgm, labels.csv, manifest.json
    models/<camera>/<detector>.cltm (+ .json sidecar, .val_scores.csv)
    scores/<camera>/<scenario>/<detector>.csv
    reports/<camera>/<scenario>.txt, <scenario>.csv
    summary.csv

``run_all`` is literally the stages called in order, so running them one by
one produces the same bytes.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackKind, AttackSpec, schedule_attacks
from .detectors import (AnomalyScoreSeries, DetectorConfig, DetectorKind, DetectorModel,
                        score_frames, train)
from .errors import IngestError, InvalidConfig
from .evaluation import (ReportRow, calibrate_threshold, classify, metrics, parse_csv,
                         scenario_report, write_csv)
from .scene import (DatasetManifest, FrameSequence, SceneConfig, generate_scene, load_frames,
                    save_frames, split_point)
from .seeding import derive_seed

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIOS = [k.value for k in AttackKind]
# table order used in every report
DETECTORS = ["predictor", "interpolator", "vae", "ae"]
DISPLAY = {"ae": "AE", "predictor": "Predictor", "interpolator": "Interpolator", "vae": "VAE"}


def default_config_dict() -> dict:
    """Desk-scale defaults: two cameras, four attacks, four detectors."""
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": 0,
        "n_frames": 2600,
        "split_ratio": 0.77,
        "validation_fraction": 0.1,
        "threshold": {"method": "mean_plus_k_sigma", "param": 3.0},
        "cameras": {
            "cam1": SceneConfig().to_dict(),
            "cam2": SceneConfig(window_rows=(3, 10), texture_period=32,
                                passengers=(2, 3)).to_dict(),
        },
        "attacks": {k: AttackSpec(kind=k).to_dict() for k in SCENARIOS},
        "detectors": {k: DetectorConfig(kind=k).to_dict() for k in DETECTORS},
    }


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    seed: int
    n_frames: int
    split_ratio: float
    validation_fraction: float
    threshold_method: str
    threshold_param: float
    cameras: dict[str, SceneConfig]
    attacks: dict[str, AttackSpec]
    detectors: dict[str, DetectorConfig]
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ExperimentConfig":
        """Overlay ``d`` on the defaults and validate.

        Camera, attack and detector tables given in ``d`` replace the default
        set of names but inherit default field values.
        """
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InvalidConfig(
                f"unsupported schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}")
        defaults = default_config_dict()
        unknown = set(d) - set(defaults)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        merged = _merge({k: v for k, v in defaults.items()
                         if k not in ("cameras", "attacks", "detectors")},
                        {k: v for k, v in d.items() if k not in ("cameras", "attacks", "detectors")})
        base_scene = SceneConfig().to_dict()
        merged["cameras"] = {name: _merge(base_scene, c)
                             for name, c in d.get("cameras", defaults["cameras"]).items()}
        merged["attacks"] = {name: _merge(AttackSpec(kind=name).to_dict(), a) if name in SCENARIOS
                             else a for name, a in d.get("attacks", defaults["attacks"]).items()}
        merged["detectors"] = {name: _merge(DetectorConfig(kind=name).to_dict(), c)
                               if name in DETECTORS else c
                               for name, c in d.get("detectors", defaults["detectors"]).items()}
        if seed is not None:
            merged["seed"] = int(seed)
        return cls._build(merged)

    @classmethod
    def _build(cls, m: dict) -> "ExperimentConfig":
        try:
            cameras = {name: SceneConfig.from_dict(c) for name, c in m["cameras"].items()}
            for name in m["attacks"]:
                if name not in SCENARIOS:
                    raise InvalidConfig(f"unknown attack scenario {name!r}")
            attacks = {name: AttackSpec.from_dict(a) for name, a in m["attacks"].items()}
            for name in m["detectors"]:
                if name not in DETECTORS:
                    raise InvalidConfig(f"unknown detector {name!r}")
            detectors = {name: DetectorConfig.from_dict({**c, "kind": name})
                         for name, c in m["detectors"].items()}
            th = m["threshold"]
            cfg = cls(seed=int(m["seed"]), n_frames=int(m["n_frames"]),
                      split_ratio=float(m["split_ratio"]),
                      validation_fraction=float(m["validation_fraction"]),
                      threshold_method=str(th["method"]), threshold_param=float(th["param"]),
                      cameras=cameras, attacks=attacks, detectors=detectors, raw=m)
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"malformed config: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.cameras:
            raise InvalidConfig("config needs at least one camera")
        for name in self.cameras:
            if not name or "/" in name or name.startswith("."):
                raise InvalidConfig(f"camera name {name!r} is not a plain directory name")
        for c in self.cameras.values():
            c.validate()
        for name, a in self.attacks.items():
            a.validate(min(c.margin for c in self.cameras.values())
                       if a.kind is AttackKind.SHIFT else None)
        for d in self.detectors.values():
            d.validate()
        if not 0.0 < self.split_ratio < 1.0:
            raise InvalidConfig(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidConfig(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        if self.threshold_method not in ("mean_plus_k_sigma", "max_validation"):
            raise InvalidConfig(f"unknown threshold method {self.threshold_method!r}")
        k = self.split_index
        n_val = split_point(k, self.validation_fraction)
        need = self.max_context + 2
        if min(k - n_val, n_val, self.n_frames - k) < need:
            raise InvalidConfig(
                f"{self.n_frames} frames split {k - n_val}/{n_val}/{self.n_frames - k} "
                f"(train/validation/test); each part needs at least {need}")

    @property
    def split_index(self) -> int:
        return split_point(self.n_frames, self.split_ratio)

    @property
    def max_context(self) -> int:
        return max((d.context for d in self.detectors.values()), default=4)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    # -- sub-seeds --------------------------------------------------------------

    def scene_for(self, camera: str) -> SceneConfig:
        cfg = copy.deepcopy(self.cameras[camera])
        cfg.seed = derive_seed(self.seed, f"scene:{camera}")
        return cfg

    def attack_for(self, camera: str, scenario: str) -> AttackSpec:
        spec = copy.deepcopy(self.attacks[scenario])
        spec.seed = derive_seed(self.seed, f"attack:{camera}:{scenario}")
        return spec

    def detector_for(self, camera: str, kind: str) -> DetectorConfig:
        cfg = copy.deepcopy(self.detectors[kind])
        cfg.seed = derive_seed(self.seed, f"detector:{camera}:{kind}")
        return cfg


def load_config(path: str | Path | None, seed: int | None = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig.from_dict(default_config_dict(), seed)
    p = Path(path)
    if not p.is_file():
        raise IngestError(f"config file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{p}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(d, seed)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise IngestError(f"{what} not found: {path}")
    return path


# -- stages ---------------------------------------------------------------------


def synth(cfg: ExperimentConfig, out: Path, camera: str) -> DatasetManifest:
    """Render the camera's footage and write frames, source frames and manifest."""
    scene = cfg.scene_for(camera)
    source, view = generate_scene(scene, cfg.n_frames)
    root = Path(out) / "data" / camera
    save_frames(view, root / "frames")
    save_frames(source, root / "source")
    manifest = DatasetManifest(n_frames=cfg.n_frames, height=scene.height, width=scene.width,
                               seed=scene.seed, split_index=cfg.split_index,
                               scene=scene.to_dict())
    manifest.write(root / "manifest.json")
    return manifest


def _dataset(out: Path, camera: str):
    root = Path(out) / "data" / camera
    manifest = DatasetManifest.read(_require(root / "manifest.json", "dataset manifest"))
    return manifest, root


def attack(cfg: ExperimentConfig, out: Path, camera: str, scenario: str) -> list[int]:
    """Tamper the test part of a camera's footage; returns instance starts."""
    manifest, root = _dataset(out, camera)
    k = manifest.split_index
    view = load_frames(root / "frames")
    test = FrameSequence(view.frames[k:])
    spec = cfg.attack_for(camera, scenario)
    source = margin = None
    if spec.kind is AttackKind.SHIFT:
        source = FrameSequence(load_frames(root / "source").frames[k:])
        margin = manifest.scene["margin"]
    ds = schedule_attacks(test, spec, source, margin, warmup=cfg.max_context + 1)
    dest = Path(out) / "attacks" / camera / scenario
    save_frames(ds.frames, dest / "frames")
    with open(dest / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "label"])
        w.writerows([i, int(v)] for i, v in enumerate(ds.labels))
    _write_json(dest / "manifest.json", {"camera": camera, "attack": spec.to_dict(),
                                         "starts": ds.starts, "first_frame": k})
    return ds.starts


def read_labels(path) -> np.ndarray:
    p = _require(Path(path), "labels file")
    with open(p, newline="") as fh:
        return np.array([row["label"] == "1" for row in csv.DictReader(fh)], dtype=bool)


def train_stage(cfg: ExperimentConfig, out: Path, camera: str, kind: str) -> list[float]:
    """Train one detector on the clean training part minus its validation tail.

    Writes the checkpoint, its sidecar and the validation-tail scores used
    for threshold calibration.
    """
    manifest, root = _dataset(out, camera)
    frames = load_frames(root / "frames").frames[:manifest.split_index]
    n_val = split_point(len(frames), cfg.validation_fraction)
    fit, held = frames[:-n_val], frames[-n_val:]
    model = DetectorModel(cfg.detector_for(camera, kind), manifest.height, manifest.width)
    result = train(model, fit)
    dest = Path(out) / "models" / camera
    dest.mkdir(parents=True, exist_ok=True)
    model.save(dest / f"{kind}.cltm")
    score_frames(model, held).to_csv(dest / f"{kind}.val_scores.csv")
    _write_json(dest / f"{kind}.history.json", {"loss": result.loss_history})
    return result.loss_history


def load_model(out: Path, camera: str, kind: str) -> DetectorModel:
    path = Path(out) / "models" / camera / f"{kind}.cltm"
    _require(path, "model checkpoint")
    _require(path.with_suffix(".json"), "model sidecar")
    return DetectorModel.load(path)


def score_stage(cfg: ExperimentConfig, out: Path, camera: str, kind: str,
                scenario: str) -> AnomalyScoreSeries:
    model = load_model(out, camera, kind)
    frames = load_frames(_require(Path(out) / "attacks" / camera / scenario / "frames",
                                  "attacked frames"))
    series = score_frames(model, frames)
    dest = Path(out) / "scores" / camera / scenario
    dest.mkdir(parents=True, exist_ok=True)
    series.to_csv(dest / f"{kind}.csv")
    return series


def evaluate_cell(scores: AnomalyScoreSeries, labels: np.ndarray, validation, method: str,
                  param: float, name: str, camera: str = "") -> ReportRow:
    th = calibrate_threshold(validation, method, param)
    counts = classify(scores, th, labels)
    return ReportRow(name, counts, metrics(counts), th.value, camera)


def evaluate_stage(cfg: ExperimentConfig, out: Path, camera: str, scenario: str) -> list[ReportRow]:
    """Threshold every detector's scores for one scenario and write its report."""
    out = Path(out)
    labels = read_labels(out / "attacks" / camera / scenario / "labels.csv")
    rows = []
    for kind in [k for k in DETECTORS if k in cfg.detectors]:
        scores = AnomalyScoreSeries.from_csv(out / "scores" / camera / scenario / f"{kind}.csv")
        val = AnomalyScoreSeries.from_csv(out / "models" / camera / f"{kind}.val_scores.csv")
        rows.append(evaluate_cell(scores, labels, val, cfg.threshold_method,
                                  cfg.threshold_param, DISPLAY[kind], camera))
    text, csv_text = scenario_report(rows, scenario)
    text = f"camera {camera}\n{text}"
    dest = out / "reports" / camera
    dest.mkdir(parents=True, exist_ok=True)
    (dest / f"{scenario}.txt").write_text(text)
    (dest / f"{scenario}.csv").write_text(csv_text)
    write_summary(cfg, out)
    return rows


def write_summary(cfg: ExperimentConfig, out: Path) -> int:
    """Concatenate every existing scenario report into ``summary.csv``."""
    records = []
    for camera in cfg.cameras:
        for scenario in [s for s in SCENARIOS if s in cfg.attacks]:
            p = Path(out) / "reports" / camera / f"{scenario}.csv"
            if p.is_file():
                with open(p, newline="") as fh:
                    records.extend(csv.DictReader(fh))
    Path(out, "summary.csv").write_text(write_csv(records))
    return len(records)


def run_all(cfg: ExperimentConfig, out: Path) -> list[dict]:
    """Full matrix: cameras x scenarios x detectors, via the stage functions."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    scenarios = [s for s in SCENARIOS if s in cfg.attacks]
    kinds = [k for k in DETECTORS if k in cfg.detectors]
    for camera in cfg.cameras:
        log.info("synth %s", camera)
        synth(cfg, out, camera)
        for scenario in scenarios:
            attack(cfg, out, camera, scenario)
        for kind in kinds:
            log.info("train %s/%s", camera, kind)
            train_stage(cfg, out, camera, kind)
            for scenario in scenarios:
                score_stage(cfg, out, camera, kind, scenario)
        for scenario in scenarios:
            evaluate_stage(cfg, out, camera, scenario)
    return parse_csv((out / "summary.csv").read_text())


__all__ = [
    "DETECTORS", "DISPLAY", "SCENARIOS", "SCHEMA_VERSION", "DetectorKind", "ExperimentConfig",
    "attack", "default_config_dict", "evaluate_cell", "evaluate_stage", "load_config",
    "load_model", "read_labels", "run_all", "score_stage", "synth", "train_stage",
    "write_summary",
]
