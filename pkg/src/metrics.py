"""
Segmentation and classification metrics.

Segmentation: Dice and Jaccard (percent), average symmetric surface distance
and 95th-percentile Hausdorff distance (pixels). Surfaces are the inner
4-connected boundaries from maskops; the percentile is nearest-rank.

Classification: accuracy, Cohen's kappa, per-class precision/recall/F1 with
macro and support-weighted averages, laid out like a classification report.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .disttrans import boundary_edt
from .errors import DegenerateKappa, DimMismatch, EmptyForeground, EmptyList, EmptyMatrix
from .maskops import BinaryMask, boundary_cells

logger = logging.getLogger(__name__)

SEG_CSV_HEADER = ["sample", "dice", "jaccard", "asd", "hd95"]
CLASS_CSV_HEADER = ["class", "precision", "recall", "f1", "support"]
SUMMARY_LABEL = "mean±std"


class SegScore(BaseModel):
    """Segmentation scores for one sample, or their mean over a set."""

    dice: float = Field(ge=0, le=100)
    jaccard: float = Field(ge=0, le=100)
    asd: float = Field(ge=0)
    hd95: float = Field(ge=0)

    @model_validator(mode="after")
    def _jaccard_not_above_dice(self):
        if self.jaccard > self.dice + 1e-9:
            raise ValueError(f"jaccard {self.jaccard} exceeds dice {self.dice}")
        return self


# ============================================================================
# Overlap
# ============================================================================


def _check_dims(pred: BinaryMask, gt: BinaryMask) -> None:
    if pred.dims != gt.dims:
        raise DimMismatch(f"Prediction dims {pred.dims} differ from ground truth {gt.dims}")


def dice_jaccard(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float]:
    """(dice, jaccard) in percent; both 100 when the two masks are empty."""
    _check_dims(pred, gt)
    inter = int(np.logical_and(pred.cells, gt.cells).sum())
    union = int(np.logical_or(pred.cells, gt.cells).sum())
    total = pred.area + gt.area
    if total == 0:
        return 100.0, 100.0
    return 200.0 * inter / total, 100.0 * inter / union


# ============================================================================
# Surface distances
# ============================================================================


def surface_distances(pred: BinaryMask, gt: BinaryMask) -> tuple[list[float], list[float]]:
    """Nearest-boundary distances pred->gt and gt->pred, in boundary order."""
    _check_dims(pred, gt)
    if not pred.has_foreground():
        raise EmptyForeground("Prediction mask is empty; surface distances undefined")
    if not gt.has_foreground():
        raise EmptyForeground("Ground-truth mask is empty; surface distances undefined")
    to_gt = boundary_edt(gt)
    to_pred = boundary_edt(pred)
    d_pg = [float(v) for v in to_gt[boundary_cells(pred.cells)]]
    d_gp = [float(v) for v in to_pred[boundary_cells(gt.cells)]]
    return d_pg, d_gp


def _require_nonempty(d_pg: Sequence[float], d_gp: Sequence[float]) -> None:
    if len(d_pg) == 0 or len(d_gp) == 0:
        raise EmptyList("Surface distance lists must be nonempty")


def asd(d_pg: Sequence[float], d_gp: Sequence[float]) -> float:
    _require_nonempty(d_pg, d_gp)
    return (math.fsum(d_pg) + math.fsum(d_gp)) / (len(d_pg) + len(d_gp))


def nearest_rank_percentile(values: Sequence[float], percent: int) -> float:
    """Value at 1-based rank ceil(percent/100 * n) of the sorted values."""
    ordered = sorted(values)
    rank = max(1, (percent * len(ordered) + 99) // 100)
    return float(ordered[rank - 1])


def hd95(d_pg: Sequence[float], d_gp: Sequence[float]) -> float:
    _require_nonempty(d_pg, d_gp)
    return max(nearest_rank_percentile(d_pg, 95), nearest_rank_percentile(d_gp, 95))


def exact_hausdorff(d_pg: Sequence[float], d_gp: Sequence[float]) -> float:
    _require_nonempty(d_pg, d_gp)
    return float(max(max(d_pg), max(d_gp)))


# ============================================================================
# Per-sample scoring and aggregation
# ============================================================================


@dataclass
class SampleScore:
    """One row of the segmentation report.

    asd/hd95 are None when either mask is empty; `error` says why.
    """

    sample: str
    dice: float
    jaccard: float
    asd: float | None = None
    hd95: float | None = None
    error: str | None = None
    both_empty: bool = False


def score_sample(sample: str, pred: BinaryMask, gt: BinaryMask) -> SampleScore:
    dice, jaccard = dice_jaccard(pred, gt)
    score = SampleScore(sample=sample, dice=dice, jaccard=jaccard)
    if not pred.has_foreground() and not gt.has_foreground():
        score.both_empty = True
        score.error = "both masks empty"
        return score
    try:
        d_pg, d_gp = surface_distances(pred, gt)
    except EmptyForeground as e:
        logger.warning(f"Sample {sample}: {e}")
        score.error = str(e)
        return score
    score.asd = asd(d_pg, d_gp)
    score.hd95 = hd95(d_pg, d_gp)
    return score


@dataclass
class SegSummary:
    """Mean and standard deviation per column over a scored set."""

    mean: SegScore
    std: dict[str, float]
    n_samples: int
    n_distance_errors: int
    n_both_empty: int


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def summarize(scores: Sequence[SampleScore]) -> SegSummary:
    """Aggregate in the given order; errored samples are excluded from distance means."""
    if not scores:
        raise EmptyList("No scored samples to summarise")
    columns = {
        "dice": [s.dice for s in scores],
        "jaccard": [s.jaccard for s in scores],
        "asd": [s.asd for s in scores if s.asd is not None],
        "hd95": [s.hd95 for s in scores if s.hd95 is not None],
    }
    means = {}
    stds = {}
    for name, values in columns.items():
        means[name], stds[name] = _mean_std(values)
    # per-sample jaccard <= dice, so this only trims rounding
    means["jaccard"] = min(means["jaccard"], means["dice"])
    errors = sum(1 for s in scores if s.asd is None)
    if errors:
        logger.warning(f"{errors} of {len(scores)} samples excluded from distance means")
    return SegSummary(
        mean=SegScore(**means),
        std=stds,
        n_samples=len(scores),
        n_distance_errors=errors,
        n_both_empty=sum(1 for s in scores if s.both_empty),
    )


# ============================================================================
# Classification
# ============================================================================


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """k x k counts, rows = true class, cols = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimMismatch(f"Confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("Confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, true: Sequence[int], predicted: Sequence[int], k: int) -> "ConfusionMatrix":
        if len(true) != len(predicted):
            raise DimMismatch(f"{len(true)} true labels vs {len(predicted)} predictions")
        counts = np.zeros((k, k), dtype=np.int64)
        for t, p in zip(true, predicted):
            counts[int(t), int(p)] += 1
        return cls(counts)

    @property
    def k(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class ClassRow(BaseModel):
    name: str
    precision: float
    recall: float
    f1: float
    support: int


class AverageRow(BaseModel):
    precision: float
    recall: float
    f1: float


class ClassReport(BaseModel):
    """Per-class rows plus macro/weighted averages, accuracy and kappa (percent)."""

    classes: list[ClassRow]
    macro_avg: AverageRow
    weighted_avg: AverageRow
    accuracy: float
    kappa: float
    total: int


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def classification_report(cm: ConfusionMatrix, class_names: Sequence[str] | None = None) -> ClassReport:
    if cm.total <= 0:
        raise EmptyMatrix("Confusion matrix has no observations")
    names = list(class_names) if class_names else [str(i) for i in range(cm.k)]
    if len(names) != cm.k:
        raise DimMismatch(f"{len(names)} class names for a {cm.k}-class matrix")

    counts = cm.counts.astype(np.float64)
    total = float(cm.total)
    tp = np.diag(counts)
    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)

    rows = []
    for i, name in enumerate(names):
        precision = _safe_ratio(tp[i], col_sums[i])
        recall = _safe_ratio(tp[i], row_sums[i])
        f1 = _safe_ratio(2 * precision * recall, precision + recall)
        rows.append(
            ClassRow(
                name=name,
                precision=100.0 * precision,
                recall=100.0 * recall,
                f1=100.0 * f1,
                support=int(row_sums[i]),
            )
        )

    weights = row_sums / total
    macro = AverageRow(
        precision=float(np.mean([r.precision for r in rows])),
        recall=float(np.mean([r.recall for r in rows])),
        f1=float(np.mean([r.f1 for r in rows])),
    )
    weighted = AverageRow(
        precision=float(sum(w * r.precision for w, r in zip(weights, rows))),
        recall=float(sum(w * r.recall for w, r in zip(weights, rows))),
        f1=float(sum(w * r.f1 for w, r in zip(weights, rows))),
    )

    p_o = float(tp.sum()) / total
    p_e = float((row_sums * col_sums).sum()) / (total * total)
    if p_e >= 1.0:
        raise DegenerateKappa("Chance agreement is 1; kappa is undefined")
    kappa = (p_o - p_e) / (1.0 - p_e)

    return ClassReport(
        classes=rows,
        macro_avg=macro,
        weighted_avg=weighted,
        accuracy=100.0 * p_o,
        kappa=100.0 * kappa,
        total=cm.total,
    )


# ============================================================================
# CSV reports
# ============================================================================


def _fmt(value: float | None, digits: int = 4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def write_seg_csv(path: Path, scores: Sequence[SampleScore]) -> SegSummary:
    """Per-sample rows followed by a `mean±std` summary row."""
    summary = summarize(scores)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SEG_CSV_HEADER)
        for s in scores:
            writer.writerow([s.sample, _fmt(s.dice), _fmt(s.jaccard), _fmt(s.asd), _fmt(s.hd95)])
        mean = summary.mean
        writer.writerow(
            [SUMMARY_LABEL]
            + [f"{getattr(mean, col):.2f}±{summary.std[col]:.2f}" for col in SEG_CSV_HEADER[1:]]
        )
    return summary


def write_class_csv(path: Path, report: ClassReport) -> None:
    """Per-class rows, then macro avg, weighted avg, accuracy and kappa rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CLASS_CSV_HEADER)
        for row in report.classes:
            writer.writerow([row.name, _fmt(row.precision, 2), _fmt(row.recall, 2), _fmt(row.f1, 2), row.support])
        for label, avg in (("macro avg", report.macro_avg), ("weighted avg", report.weighted_avg)):
            writer.writerow([label, _fmt(avg.precision, 2), _fmt(avg.recall, 2), _fmt(avg.f1, 2), report.total])
        writer.writerow(["accuracy", "", "", _fmt(report.accuracy, 2), report.total])
        writer.writerow(["kappa", "", "", _fmt(report.kappa, 2), report.total])


def write_confusion_csv(path: Path, cm: ConfusionMatrix, class_names: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, cm.counts):
            writer.writerow([name] + [int(v) for v in row])
