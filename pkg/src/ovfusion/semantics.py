"""Open-vocabulary classification and segmentation metrics.

Predictions come from cosine similarity between point features and the
per-category text prototypes.  Evaluation builds a confusion matrix over
points whose ground truth is not the ignore label; a predicted -1 is never
ignored, it lands in a dedicated "rejected" column that counts as a false
negative for its ground-truth class (abstaining must hurt).  The stored
confusion therefore has shape (C, C+1) with the rejected column last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregate import PointFeatureField
from .bundle import IGNORE_LABEL, TextPrototypes
from .pixels import _unit_rows, classify_rows


@dataclass
class EvalReport:
    """Confusion-derived metrics; undefined per-class IoUs are NaN."""

    confusion: np.ndarray      # (C, C+1) int64; last column = rejected (-1) predictions
    acc: float                 # overall point accuracy
    mean_class_acc: float      # mean per-class recall over classes with gt support
    per_class_iou: np.ndarray  # (C,) float64, NaN where class absent from gt and pred
    miou: float
    split: dict | None = field(default=None)  # seen/unseen breakdown when requested

    def to_json_dict(self, names: list[str] | None = None) -> dict:
        c = self.confusion.shape[0]
        names = names if names is not None else [str(i) for i in range(c)]
        iou = {
            names[i]: (None if np.isnan(self.per_class_iou[i]) else float(self.per_class_iou[i]))
            for i in range(c)
        }
        out = {
            "acc": self.acc,
            "mean_class_acc": self.mean_class_acc,
            "miou": self.miou,
            "per_class_iou": iou,
            "confusion": self.confusion.tolist(),
        }
        if self.split is not None:
            out["split"] = {
                "seen": [names[i] for i in self.split["seen"]],
                "unseen": [names[i] for i in self.split["unseen"]],
                "miou_seen": self.split["miou_seen"],
                "miou_unseen": self.split["miou_unseen"],
                "hiou": self.split["hiou"],
            }
        return out


def classify_points(field_: PointFeatureField, text: TextPrototypes) -> np.ndarray:
    """Cosine-argmax label per point; invalid points map to -1."""
    out = np.full(field_.valid.shape[0], IGNORE_LABEL, dtype=np.int64)
    if np.any(field_.valid):
        out[field_.valid] = classify_rows(field_.features[field_.valid], text)
    return out


def query_similarity(field_: PointFeatureField, query: np.ndarray) -> np.ndarray:
    """Per-point cosine similarity to a free-form query embedding.

    Invalid points score NaN so downstream consumers can exclude them from
    any normalization; raises on a zero-norm query.
    """
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("query_similarity: zero-norm query")
    out = np.full(field_.valid.shape[0], np.nan)
    if np.any(field_.valid):
        feats = _unit_rows(field_.features[field_.valid], "point features")
        out[field_.valid] = feats @ (q / qn)
    return out


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    num_categories: int,
    ignore: int = IGNORE_LABEL,
) -> EvalReport:
    """Confusion matrix, Acc, per-class IoU and mIoU for one labeling.

    Points with gt == ignore are excluded.  Predicted ignore labels are
    counted in the rejected column (wrong for every gt class).  Classes
    absent from both gt and prediction are excluded from the mIoU mean.
    """
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"evaluate: pred length {pred.shape} != gt length {gt.shape}")
    c = int(num_categories)

    counted = gt != ignore
    g = gt[counted]
    p = pred[counted]
    col = np.where(p == ignore, c, p)  # rejected predictions -> extra column
    confusion = np.bincount(g * (c + 1) + col, minlength=c * (c + 1)).reshape(c, c + 1)

    total = int(confusion.sum())
    tp = np.diag(confusion[:, :c]).astype(np.float64)
    gt_support = confusion.sum(axis=1).astype(np.float64)
    pred_support = confusion[:, :c].sum(axis=0).astype(np.float64)
    fn = gt_support - tp          # includes rejected predictions
    fp = pred_support - tp

    acc = float(tp.sum() / total) if total else 0.0
    defined = (gt_support > 0) | (pred_support > 0)
    iou = np.full(c, np.nan)
    denom = tp + fp + fn
    iou[defined] = tp[defined] / denom[defined]
    miou = float(np.mean(iou[defined])) if defined.any() else 0.0

    has_gt = gt_support > 0
    mca = float(np.mean(tp[has_gt] / gt_support[has_gt])) if has_gt.any() else 0.0
    return EvalReport(
        confusion=confusion, acc=acc, mean_class_acc=mca,
        per_class_iou=iou, miou=miou,
    )


def hiou(miou_seen: float, miou_unseen: float) -> float:
    """Harmonic mean of seen-class and unseen-class mIoU."""
    if miou_seen < 0 or miou_unseen < 0:
        raise ValueError("hiou: inputs must be >= 0")
    if miou_seen == 0 and miou_unseen == 0:
        raise ValueError("hiou: both inputs are zero")
    return 2.0 * miou_seen * miou_unseen / (miou_seen + miou_unseen)


def evaluate_split(
    pred: np.ndarray,
    gt: np.ndarray,
    num_categories: int,
    unseen: list[int] | tuple[int, ...],
    ignore: int = IGNORE_LABEL,
) -> EvalReport:
    """Evaluate with a seen/unseen category split and harmonic IoU.

    Unseen categories are still classified (their prototypes stay in play
    at inference); the split only changes which classes each mIoU averages
    over.  A side with no defined class contributes mIoU 0.
    """
    unseen_set = sorted(set(int(u) for u in unseen))
    if any(u < 0 or u >= num_categories for u in unseen_set):
        raise ValueError("evaluate_split: unseen category index out of range")
    seen_set = [i for i in range(num_categories) if i not in unseen_set]

    report = evaluate(pred, gt, num_categories, ignore)

    def _mean_over(classes: list[int]) -> float:
        vals = [report.per_class_iou[i] for i in classes if not np.isnan(report.per_class_iou[i])]
        return float(np.mean(vals)) if vals else 0.0

    ms, mu = _mean_over(seen_set), _mean_over(unseen_set)
    report.split = {
        "seen": seen_set,
        "unseen": unseen_set,
        "miou_seen": ms,
        "miou_unseen": mu,
        "hiou": hiou(ms, mu) if (ms > 0 or mu > 0) else 0.0,
    }
    return report
