"""Threshold calibration, frame-level confusion counts and table reports."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


class ThresholdMethod(str, enum.Enum):
    MEAN_PLUS_K_SIGMA = "mean_plus_k_sigma"
    MAX_VALIDATION = "max_validation"


@dataclass(frozen=True)
class Threshold:
    value: float
    method: ThresholdMethod
    param: float


def _scored_values(scores) -> np.ndarray:
    values = getattr(scores, "values", scores)
    values = np.asarray(values, dtype=np.float64)
    return values[np.isfinite(values)]


def calibrate_threshold(clean_scores, method: ThresholdMethod | str = ThresholdMethod.MEAN_PLUS_K_SIGMA,
                        param: float | None = None) -> Threshold:
    """Decision boundary from attack-free validation scores.

    ``mean_plus_k_sigma``: mean + param * std (population std, default k=3).
    ``max_validation``: max * param (default margin 1.5).
    """
    method = ThresholdMethod(method)
    values = _scored_values(clean_scores)
    if values.size == 0:
        raise InvalidArgument("cannot calibrate a threshold from an empty score series")
    if method is ThresholdMethod.MEAN_PLUS_K_SIGMA:
        param = 3.0 if param is None else float(param)
        value = float(values.mean() + param * values.std())
    else:
        param = 1.5 if param is None else float(param)
        value = float(values.max() * param)
    return Threshold(max(value, 0.0), method, param)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __str__(self) -> str:
        return f"{self.tp}/{self.tn}/{self.fp}/{self.fn}"


def classify(scores, threshold: Threshold | float, labels) -> ConfusionCounts:
    """Flag frames whose score exceeds the threshold and tally against labels.

    ``scores`` is an :class:`AnomalyScoreSeries` or an array with NaN for
    unscored frames; unscored frames are not counted.
    """
    value = threshold.value if isinstance(threshold, Threshold) else float(threshold)
    raw = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    scored = np.asarray(getattr(scores, "scored", np.isfinite(raw)), dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if raw.shape != labels.shape:
        raise InvalidArgument(f"{raw.size} scores but {labels.size} labels")
    flagged = np.zeros_like(scored)
    flagged[scored] = raw[scored] > value
    pos = labels & scored
    neg = ~labels & scored
    return ConfusionCounts(
        tp=int(np.sum(flagged & pos)), tn=int(np.sum(~flagged & neg)),
        fp=int(np.sum(flagged & neg)), fn=int(np.sum(~flagged & pos)),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Precision/recall/F1; ``None`` means not applicable."""

    f1: float | None
    precision: float | None
    recall: float | None


def metrics(c: ConfusionCounts) -> MetricsReport:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(f1, precision, recall)


def fmt(value: float | None) -> str:
    return "N/A" if value is None else f"{value:.2f}"


@dataclass
class ReportRow:
    model: str
    counts: ConfusionCounts
    report: MetricsReport
    threshold: float | None = None
    camera: str = ""


CSV_FIELDS = ["camera", "scenario", "model", "tp", "tn", "fp", "fn",
              "f1", "precision", "recall", "threshold"]


def _csv_value(v: float | None) -> str:
    return "N/A" if v is None else repr(float(v))


def csv_records(rows: list[ReportRow], scenario: str) -> list[dict]:
    out = []
    for r in rows:
        out.append({
            "camera": r.camera, "scenario": scenario, "model": r.model,
            "tp": r.counts.tp, "tn": r.counts.tn, "fp": r.counts.fp, "fn": r.counts.fn,
            "f1": _csv_value(r.report.f1), "precision": _csv_value(r.report.precision),
            "recall": _csv_value(r.report.recall),
            "threshold": "" if r.threshold is None else repr(float(r.threshold)),
        })
    return out


def write_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    """Inverse of :func:`write_csv`; N/A becomes ``None``."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = dict(rec)
        for k in ("tp", "tn", "fp", "fn"):
            row[k] = int(row[k])
        for k in ("f1", "precision", "recall"):
            row[k] = None if row[k] == "N/A" else float(row[k])
        row["threshold"] = float(row["threshold"]) if row["threshold"] else None
        rows.append(row)
    return rows


def format_row(r: ReportRow) -> str:
    return f"{r.counts}, {fmt(r.report.f1)}, {fmt(r.report.precision)}, {fmt(r.report.recall)}"


def scenario_report(rows: list[ReportRow], scenario: str) -> tuple[str, str]:
    """Plain-text table and CSV text with one row per detector."""
    if not rows:
        raise InvalidArgument("scenario report needs at least one detector result")
    width = max(len("Model"), *(len(r.model) for r in rows))
    lines = [scenario, "",
             f"{'Model':<{width}}  {'TP/TN/FP/FN':<16} {'F1':>5} {'Precision':>9} {'Recall':>6}"]
    for r in rows:
        lines.append(f"{r.model:<{width}}  {str(r.counts):<16} {fmt(r.report.f1):>5} "
                     f"{fmt(r.report.precision):>9} {fmt(r.report.recall):>6}")
    return "\n".join(lines) + "\n", write_csv(csv_records(rows, scenario))
