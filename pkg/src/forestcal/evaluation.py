"""Desk-scale COCO-style detection evaluation.

Greedy score-ordered matching, 101-point interpolated average precision,
AP averaged over IoU thresholds 0.50:0.05:0.95, and rare/common/frequent
group breakdowns. Assumes exhaustive annotation (no federated-dataset
not-exhaustive flags, no crowd regions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .masks import mask_iou
from .nms import iou as box_iou
from .taxonomy import CategorySet, FrequencyGroup
from .validation import as_box

IOU_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2).tolist())
RECALL_GRID = np.linspace(0.0, 1.0, 101)
DEFAULT_MAX_DETS = 300


@dataclass(eq=False)
class Detection:
    image_id: str
    box: np.ndarray
    class_id: int
    score: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.box = as_box(self.box)
        if not np.isfinite(self.score):
            raise ValidationError(f"detection score must be finite, got {self.score!r}")


@dataclass(eq=False)
class GroundTruth:
    image_id: str
    box: np.ndarray
    class_id: int
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.box = as_box(self.box)


@dataclass
class PRCurve:
    """Recall/precision points with the right-to-left max envelope applied."""

    recall: np.ndarray
    precision: np.ndarray


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ap_r: float | None
    ap_c: float | None
    ap_f: float | None
    per_class_ap: dict[int, float]
    pr_curves: dict[tuple[int, float], PRCurve]
    skipped_classes: list[int]
    iou_kind: str
    n_detections: int
    n_ground_truths: int

    def to_dict(self, include_curves: bool = True) -> dict:
        out = {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_r": self.ap_r,
            "ap_c": self.ap_c,
            "ap_f": self.ap_f,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "skipped_classes": sorted(self.skipped_classes),
            "iou_kind": self.iou_kind,
            "n_detections": self.n_detections,
            "n_ground_truths": self.n_ground_truths,
        }
        if include_curves:
            out["pr_curves"] = [
                {
                    "class_id": cls,
                    "iou": thr,
                    "recall": curve.recall.tolist(),
                    "precision": curve.precision.tolist(),
                }
                for (cls, thr), curve in sorted(self.pr_curves.items())
            ]
        return out


def _pair_iou(det: Detection, gt: GroundTruth, iou_kind: str) -> float:
    if iou_kind == "mask":
        if det.mask is None or gt.mask is None:
            raise ValidationError(
                f"mask IoU requested but a record on image {det.image_id!r} has no mask"
            )
        return mask_iou(det.mask, gt.mask)
    return box_iou(det.box, gt.box)


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                     iou_thr: float, iou_kind: str = "box") -> list[tuple[Detection, int | None]]:
    """Greedy one-to-one matching for one class in one image.

    ``dets`` must be sorted by descending score. Each detection takes the
    unmatched ground truth with the highest IoU at or above ``iou_thr``
    (ties to the lower index); each ground truth matches at most once.
    """
    taken = [False] * len(gts)
    out: list[tuple[Detection, int | None]] = []
    for det in dets:
        best_j = None
        best_iou = iou_thr
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = _pair_iou(det, gt, iou_kind)
            if v > best_iou or (best_j is None and v >= iou_thr):
                best_j = j
                best_iou = v
        if best_j is not None:
            taken[best_j] = True
        out.append((det, best_j))
    return out


def pr_curve(scores, matched, n_gt: int) -> PRCurve:
    """Cumulative TP/FP sweep by descending score for one class.

    ``matched`` flags which detections are true positives. The returned
    precision is the right-to-left running maximum (monotone envelope).
    """
    if n_gt <= 0:
        raise ValidationError("pr_curve needs at least one ground truth (class excluded)")
    scores = np.asarray(scores, dtype=np.float64)
    matched = np.asarray(matched, dtype=bool)
    if scores.shape != matched.shape:
        raise ValidationError("scores and matched flags must have equal length")
    if scores.size == 0:
        return PRCurve(np.empty(0), np.empty(0))
    order = np.argsort(-scores, kind="stable")
    tp = np.cumsum(matched[order])
    fp = np.cumsum(~matched[order])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return PRCurve(recall, envelope)


def average_precision(curve: PRCurve) -> float:
    """101-point interpolation: mean max-precision at recalls 0.00..1.00."""
    if curve.recall.size == 0:
        return 0.0
    idx = np.searchsorted(curve.recall, RECALL_GRID, side="left")
    prec = np.where(idx < curve.recall.size, curve.precision[np.minimum(idx, curve.recall.size - 1)], 0.0)
    return float(prec.mean())


def _group_by_image(items):
    grouped: dict[str, list] = {}
    for item in items:
        grouped.setdefault(item.image_id, []).append(item)
    return grouped


def _resolve_iou_kind(dets, gts, iou_kind: str) -> str:
    if iou_kind in ("box", "mask"):
        return iou_kind
    if iou_kind != "auto":
        raise ValidationError(f"iou_kind must be 'box', 'mask' or 'auto', got {iou_kind!r}")
    records = list(dets) + list(gts)
    if records and all(r.mask is not None for r in records):
        return "mask"
    return "box"


def evaluate(dets: Sequence[Detection], gts: Sequence[GroundTruth],
             categories: CategorySet, *, iou_kind: str = "auto",
             max_dets_per_image: int = DEFAULT_MAX_DETS) -> EvalReport:
    """Full evaluation over all classes and IoU thresholds.

    AP is the unweighted mean over classes with ground truth of the mean
    per-threshold AP; group APs restrict the class mean to one frequency
    group (None when the group has no annotated classes).
    """
    if not gts:
        raise ValidationError("evaluation requires at least one ground truth")
    kind = _resolve_iou_kind(dets, gts, iou_kind)

    # Cap detections per image by score (ties keep input order), keeping
    # the survivors in raw input order so score ties break by file order.
    indices_by_image: dict[str, list[int]] = {}
    for i, d in enumerate(dets):
        indices_by_image.setdefault(d.image_id, []).append(i)
    keep = np.zeros(len(dets), dtype=bool)
    for indices in indices_by_image.values():
        order = sorted(indices, key=lambda i: (-dets[i].score, i))
        keep[order[:max_dets_per_image]] = True
    capped = [d for i, d in enumerate(dets) if keep[i]]

    per_class_thr_ap: dict[int, dict[float, float]] = {}
    curves: dict[tuple[int, float], PRCurve] = {}
    skipped: list[int] = []

    for cat in categories:
        cls = cat.id
        cls_gts = [g for g in gts if g.class_id == cls]
        if not cls_gts:
            skipped.append(cls)
            continue
        cls_dets = [d for d in capped if d.class_id == cls]
        # Stable global order by descending score for the dataset sweep;
        # per-image sublists inherit the ordering.
        det_order = sorted(range(len(cls_dets)), key=lambda i: (-cls_dets[i].score, i))
        cls_dets = [cls_dets[i] for i in det_order]
        gts_by_image = _group_by_image(cls_gts)
        idx_by_image: dict[str, list[int]] = {}
        for i, d in enumerate(cls_dets):
            idx_by_image.setdefault(d.image_id, []).append(i)
        scores = np.array([d.score for d in cls_dets])

        per_thr: dict[float, float] = {}
        for thr in IOU_THRESHOLDS:
            flags = np.zeros(len(cls_dets), dtype=bool)
            for image_id, indices in idx_by_image.items():
                image_gts = gts_by_image.get(image_id, [])
                matches = match_detections([cls_dets[i] for i in indices], image_gts, thr, kind)
                for (_, gt_j), i in zip(matches, indices):
                    flags[i] = gt_j is not None
            curve = pr_curve(scores, flags, len(cls_gts))
            curves[(cls, thr)] = curve
            per_thr[thr] = average_precision(curve)
        per_class_thr_ap[cls] = per_thr

    if not per_class_thr_ap:
        raise ValidationError("no class has ground truth annotations")

    def class_mean(class_ids, thr=None) -> float | None:
        vals = []
        for cls in class_ids:
            per_thr = per_class_thr_ap[cls]
            vals.append(per_thr[thr] if thr is not None else float(np.mean(list(per_thr.values()))))
        return float(np.mean(vals)) if vals else None

    evaluated = sorted(per_class_thr_ap)
    per_class_ap = {cls: float(np.mean(list(per_class_thr_ap[cls].values()))) for cls in evaluated}
    group_ids = {
        g: [cls for cls in evaluated if categories.group_of(cls) is g]
        for g in FrequencyGroup
    }
    return EvalReport(
        ap=class_mean(evaluated),
        ap50=class_mean(evaluated, 0.5),
        ap75=class_mean(evaluated, 0.75),
        ap_r=class_mean(group_ids[FrequencyGroup.RARE]),
        ap_c=class_mean(group_ids[FrequencyGroup.COMMON]),
        ap_f=class_mean(group_ids[FrequencyGroup.FREQUENT]),
        per_class_ap=per_class_ap,
        pr_curves=curves,
        skipped_classes=skipped,
        iou_kind=kind,
        n_detections=len(dets),
        n_ground_truths=len(gts),
    )
