"""Segmentation metrics: per-class IoU, pixel accuracy and mask AP (AP^r)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import InstanceSet

DEFAULT_IOU_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class MetricReport:
    per_class_iou: list  # None where a class is absent from both maps
    mean_iou: float
    pixel_accuracy: float
    ap_r: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_class_iou": self.per_class_iou,
            "mean_iou": self.mean_iou,
            "pixel_accuracy": self.pixel_accuracy,
            "ap_r": {f"{t:g}": v for t, v in sorted(self.ap_r.items())},
        }


def _check_pair(pred, gt):
    pred = np.asarray(getattr(pred, "labels", pred))
    gt = np.asarray(getattr(gt, "labels", gt))
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def confusion_matrix(pred, gt, num_labels: int) -> np.ndarray:
    """``cm[g, p]`` counts pixels with ground truth ``g`` predicted as ``p``."""
    pred, gt = _check_pair(pred, gt)
    for name, a in (("pred", pred), ("gt", gt)):
        if a.size and (a.min() < 0 or a.max() >= num_labels):
            raise ValueError(f"{name} labels outside [0, {num_labels})")
    idx = gt.ravel().astype(np.int64) * num_labels + pred.ravel()
    return np.bincount(idx, minlength=num_labels ** 2).reshape(num_labels, num_labels)


def miou(pred, gt, num_labels: int) -> tuple[np.ndarray, float]:
    """Per-class IoU (NaN for classes absent from both maps) and their mean."""
    cm = confusion_matrix(pred, gt, num_labels)
    inter = np.diag(cm).astype(np.float64)
    union = cm.sum(0) + cm.sum(1) - np.diag(cm)
    iou = np.full(num_labels, np.nan)
    defined = union > 0
    iou[defined] = inter[defined] / union[defined]
    mean = float(np.mean(iou[defined])) if defined.any() else float("nan")
    return iou, mean


def pixel_accuracy(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    if pred.size == 0:
        raise ValueError("empty label maps")
    return float(np.mean(pred == gt))


def mask_iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def average_precision(hits, num_gt: int) -> float:
    """All-point interpolated AP from TP(1)/FP(0) flags in descending-score order."""
    hits = np.asarray(hits, dtype=np.float64)
    if num_gt == 0:
        raise ValueError("AP undefined without ground truth")
    if len(hits) == 0:
        return 0.0
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    # make precision monotone from the right, then integrate over recall steps
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * envelope))


def match_instances(pred: InstanceSet, gt: InstanceSet, class_id: int,
                    iou_threshold: float) -> tuple[list[int], int]:
    """Greedy score-ordered matching for one class.

    Returns the TP(1)/FP(0) flag of each prediction in descending-score order
    (stable for equal scores) and the number of ground truths of that class.
    """
    preds = [p for p in pred if p.class_id == class_id]
    gts = [g for g in gt if g.class_id == class_id]
    order = np.argsort([-p.score for p in preds], kind="stable")
    matched = [False] * len(gts)
    hits = []
    for k in order:
        best, best_iou = -1, -1.0
        for g, inst in enumerate(gts):
            if matched[g]:
                continue
            iou = mask_iou(preds[k].mask, inst.mask)
            if iou > best_iou:
                best, best_iou = g, iou
        if best >= 0 and best_iou >= iou_threshold:
            matched[best] = True
            hits.append(1)
        else:
            hits.append(0)
    return hits, len(gts)


def ap_r(pred: InstanceSet, gt: InstanceSet, iou_threshold: float = 0.5) -> tuple[dict, float]:
    """Per-class mask AP at one IoU threshold, and the mean over GT classes.

    Classes with no ground-truth instance are left out; a class with ground
    truth but no predictions scores 0.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    shapes = {i.mask.shape for i in list(pred) + list(gt)}
    if len(shapes) > 1:
        raise ValueError(f"instance masks disagree on shape: {sorted(shapes)}")
    per_class = {}
    for c in sorted({g.class_id for g in gt}):
        hits, num_gt = match_instances(pred, gt, c, iou_threshold)
        per_class[c] = average_precision(hits, num_gt)
    mean = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return per_class, mean


def evaluate(pred, gt, num_labels: int, pred_instances: InstanceSet | None = None,
             gt_instances: InstanceSet | None = None,
             thresholds=DEFAULT_IOU_THRESHOLDS) -> MetricReport:
    iou, mean = miou(pred, gt, num_labels)
    report = MetricReport(
        [None if np.isnan(v) else float(v) for v in iou],
        mean,
        pixel_accuracy(pred, gt),
    )
    if pred_instances is not None and gt_instances is not None and len(gt_instances):
        report.ap_r = {float(t): ap_r(pred_instances, gt_instances, t)[1] for t in thresholds}
    return report
