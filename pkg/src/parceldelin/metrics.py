"""Confusion counting, Dice score, accuracy, and result-table reporting.

Dice = 2TP / (2TP + FP + FN), the F1 score of the positive class.
Aggregation over a split defaults to micro (sum confusion counts over all
images, then compute the metric); macro (mean of per-image scores, images
with an undefined Dice excluded but counted) sits behind a flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Sample, to_input_tensor
from .errors import ConfigError, ShapeError
from .variants import Task

TABLE_ROWS = (
    ("dice", Task.BOUNDARY, "Dice Score - Boundary"),
    ("dice", Task.AREA, "Dice Score - Area"),
    ("accuracy", Task.BOUNDARY, "Accuracy - Boundary"),
    ("accuracy", Task.AREA, "Accuracy - Area"),
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def threshold(prob_map: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Binarize probabilities: pixel = 1 iff p >= tau."""
    return (np.asarray(prob_map) >= tau).astype(np.uint8)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Per-pixel confusion counts with positive class 1."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"confusion shape mismatch: {pred.shape} vs {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def merge_counts(counts) -> ConfusionCounts:
    return ConfusionCounts(
        sum(c.tp for c in counts),
        sum(c.fp for c in counts),
        sum(c.fn for c in counts),
        sum(c.tn for c in counts),
    )


class UndefinedMetricError(ConfigError):
    """Dice is undefined when prediction and ground truth are both all-negative."""


def dice(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetricError("dice undefined: no positives in prediction or ground truth")
    return 2.0 * c.tp / denom


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ConfigError("accuracy undefined on an empty mask set")
    return (c.tp + c.tn) / c.total


@dataclass
class MetricEntry:
    dice: float
    accuracy: float
    n_images: int
    n_undefined: int = 0  # images whose Dice was undefined (macro only)


@dataclass
class MetricsReport:
    """Scores per (variant display name, task), plus the aggregation tag."""

    aggregation: str = "micro"
    entries: dict[tuple[str, str], MetricEntry] = field(default_factory=dict)

    def add(self, variant_name: str, task: Task, entry: MetricEntry) -> None:
        self.entries[(variant_name, task.value)] = entry

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "results": [
                {
                    "variant": variant,
                    "task": task,
                    "dice": e.dice,
                    "accuracy": e.accuracy,
                    "n_images": e.n_images,
                    "n_undefined": e.n_undefined,
                }
                for (variant, task), e in self.entries.items()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _sample_gt(sample: Sample, task: Task) -> np.ndarray:
    return sample.boundary_mask if task is Task.BOUNDARY else sample.area_mask


def per_image_counts(model, samples: list[Sample], task: Task, tau: float = 0.5, batch_size: int = 6):
    """Eval-mode confusion counts per sample, batched for speed."""
    counts: list[ConfusionCounts] = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i : i + batch_size]
        x = np.stack([to_input_tensor(s, model.variant) for s in chunk])
        probs = model.forward(x, train=False).data
        for j, s in enumerate(chunk):
            counts.append(confusion(threshold(probs[j, 0], tau), _sample_gt(s, task)))
    return counts


def aggregate(counts, aggregation: str = "micro") -> MetricEntry:
    if not counts:
        raise ConfigError("cannot aggregate an empty split")
    if aggregation == "micro":
        total = merge_counts(counts)
        try:
            d = dice(total)
        except UndefinedMetricError:
            d = float("nan")
        return MetricEntry(d, accuracy(total), n_images=len(counts))
    if aggregation == "macro":
        dices = []
        undefined = 0
        for c in counts:
            try:
                dices.append(dice(c))
            except UndefinedMetricError:
                undefined += 1
        accs = [accuracy(c) for c in counts]
        d = float(np.mean(dices)) if dices else float("nan")
        return MetricEntry(d, float(np.mean(accs)), n_images=len(counts), n_undefined=undefined)
    raise ConfigError(f"unknown aggregation {aggregation!r} (micro|macro)")


def split_scores(model, samples: list[Sample], task: Task, tau: float = 0.5, batch_size: int = 6) -> tuple[float, float]:
    """Micro (dice, accuracy) over a split; dice counts an all-negative split as 0."""
    total = merge_counts(per_image_counts(model, samples, task, tau, batch_size))
    try:
        d = dice(total)
    except UndefinedMetricError:
        d = 0.0
    return d, accuracy(total)


def evaluate(model, samples: list[Sample], task: Task, tau: float = 0.5, aggregation: str = "micro", batch_size: int = 6) -> MetricsReport:
    """Score one model on one split and wrap the result in a MetricsReport."""
    if not samples:
        raise ConfigError("evaluate needs a non-empty split")
    report = MetricsReport(aggregation=aggregation)
    counts = per_image_counts(model, samples, task, tau, batch_size)
    report.add(model.variant.display_name, task, aggregate(counts, aggregation))
    return report


def merge_reports(reports) -> MetricsReport:
    """Combine single-entry reports (same aggregation) into one table-ready report."""
    reports = list(reports)
    if not reports:
        raise ConfigError("no reports to merge")
    if len({r.aggregation for r in reports}) != 1:
        raise ConfigError("cannot merge reports with different aggregation modes")
    merged = MetricsReport(aggregation=reports[0].aggregation)
    for r in reports:
        merged.entries.update(r.entries)
    return merged


def format_table(report: MetricsReport) -> str:
    """Render the results grid: metric/task rows, one column per variant."""
    variants: list[str] = []
    for variant, _task in report.entries:
        if variant not in variants:
            variants.append(variant)
    label_w = max(len(r[2]) for r in TABLE_ROWS)
    col_w = [max(len(v), 6) for v in variants]
    lines = [" " * label_w + " | " + " | ".join(v.rjust(w) for v, w in zip(variants, col_w))]
    lines.append("-" * len(lines[0]))
    for _metric, task, label in TABLE_ROWS:
        cells = []
        for v, w in zip(variants, col_w):
            e = report.entries.get((v, task.value))
            if e is None:
                cells.append("-".rjust(w))
            else:
                val = e.dice if _metric == "dice" else e.accuracy
                cells.append(f"{val:.2f}".rjust(w))
        lines.append(label.ljust(label_w) + " | " + " | ".join(cells))
    return "\n".join(lines)
