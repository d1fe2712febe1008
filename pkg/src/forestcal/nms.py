"""Class-aware NMS with frequency-dependent thresholds (NMS resampling).

Tail classes get higher suppression thresholds so more of their proposals
survive; head classes get lower ones. The kept proposal's class decides
the threshold applied to everything it suppresses; background proposals
use a fixed class-agnostic threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .taxonomy import CategorySet, FrequencyGroup
from .validation import as_box, as_box_array, as_finite_array

BACKGROUND = -1

SCHEME_DISCRETE = "discrete"
SCHEME_LINEAR = "linear"
SCHEME_FIXED = "fixed"

_DISCRETE_DEFAULTS = (0.7, 0.8, 0.9)
_LINEAR_DEFAULTS = (0.65, 0.75, 0.85)
_LINEAR_DEFAULT_BETA = 0.1


@dataclass(eq=False)
class Proposal:
    """A candidate box with its score and assigned class (-1 = background)."""

    box: np.ndarray
    score: float
    class_id: int = BACKGROUND

    def __post_init__(self):
        self.box = as_box(self.box)
        if not np.isfinite(self.score):
            raise ValidationError(f"proposal score must be finite, got {self.score!r}")


@dataclass(frozen=True)
class ResamplingConfig:
    """Threshold scheme configuration.

    Alphas default per scheme: discrete uses (0.7, 0.8, 0.9), linear uses
    (0.65, 0.75, 0.85) with beta 0.1. ``as_printed`` swaps the linear
    scheme's base alphas between the frequent and rare branches to match
    the literal published equation instead of its stated intent.
    """

    scheme: str = SCHEME_DISCRETE
    alpha_f: float | None = None
    alpha_c: float | None = None
    alpha_r: float | None = None
    beta: float | None = None
    background_threshold: float = 0.7
    fixed_threshold: float | None = None
    as_printed: bool = False

    def __post_init__(self):
        if self.scheme not in (SCHEME_DISCRETE, SCHEME_LINEAR, SCHEME_FIXED):
            raise ValidationError(f"unknown NMS scheme {self.scheme!r}")
        if self.scheme == SCHEME_FIXED:
            if self.fixed_threshold is None:
                raise ValidationError("fixed scheme requires fixed_threshold")
            if not 0.0 < self.fixed_threshold <= 1.0:
                raise ValidationError(f"fixed_threshold must be in (0, 1], got {self.fixed_threshold}")
            return
        defaults = _DISCRETE_DEFAULTS if self.scheme == SCHEME_DISCRETE else _LINEAR_DEFAULTS
        for name, value in zip(("alpha_f", "alpha_c", "alpha_r"), defaults):
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.scheme == SCHEME_LINEAR and self.beta is None:
            object.__setattr__(self, "beta", _LINEAR_DEFAULT_BETA)
        for name in ("alpha_f", "alpha_c", "alpha_r"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must be in (0, 1), got {v}")
        if not self.alpha_f < self.alpha_c < self.alpha_r:
            raise ValidationError(
                f"alphas must ascend: alpha_f < alpha_c < alpha_r, got "
                f"({self.alpha_f}, {self.alpha_c}, {self.alpha_r})"
            )
        if self.scheme == SCHEME_LINEAR:
            if self.beta < 0:
                raise ValidationError(f"beta must be non-negative, got {self.beta}")
            if self.alpha_r + self.beta > 1.0:
                raise ValidationError(
                    f"alpha_r + beta = {self.alpha_r + self.beta} exceeds 1"
                )


def iou(a, b) -> float:
    """Intersection over union of two boxes; 0 when the union has no area."""
    a = as_box(a, "box a")
    b = as_box(b, "box b")
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        inter = 0.0
    else:
        inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(inter / union)


def iou_matrix(a, b) -> np.ndarray:
    """(n, m) IoU between two box arrays."""
    a = as_box_array(a, "boxes a")
    b = as_box_array(b, "boxes b")
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    ix = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    iy = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def threshold_discrete(group: FrequencyGroup, cfg: ResamplingConfig) -> float:
    """One threshold per frequency group, ascending toward the tail."""
    return {
        FrequencyGroup.FREQUENT: cfg.alpha_f,
        FrequencyGroup.COMMON: cfg.alpha_c,
        FrequencyGroup.RARE: cfg.alpha_r,
    }[FrequencyGroup(group)]


def _linear_base(group: FrequencyGroup, cfg: ResamplingConfig) -> float:
    if cfg.as_printed:
        # Literal published equation: base alphas swapped between the
        # frequent and rare branches.
        bases = {
            FrequencyGroup.FREQUENT: cfg.alpha_r,
            FrequencyGroup.COMMON: cfg.alpha_c,
            FrequencyGroup.RARE: cfg.alpha_f,
        }
    else:
        bases = {
            FrequencyGroup.FREQUENT: cfg.alpha_f,
            FrequencyGroup.COMMON: cfg.alpha_c,
            FrequencyGroup.RARE: cfg.alpha_r,
        }
    return bases[FrequencyGroup(group)]


def threshold_linear(cf: int, group: FrequencyGroup,
                     group_stats: Mapping[FrequencyGroup, tuple[int, int]],
                     cfg: ResamplingConfig) -> float:
    """Interpolate within the group's interval by frequency position.

    threshold = base(group) + beta * (cf_max - cf) / (cf_max - cf_min),
    with the fraction defined as 0 for a single-frequency group.
    """
    group = FrequencyGroup(group)
    lo, hi = group_stats[group]
    if not lo <= cf <= hi:
        raise ValidationError(
            f"cf={cf} outside group {group.value!r} range [{lo}, {hi}]"
        )
    frac = 0.0 if hi == lo else (hi - cf) / (hi - lo)
    return _linear_base(group, cfg) + cfg.beta * frac


def class_thresholds(categories: CategorySet, cfg: ResamplingConfig) -> dict[int, float]:
    """Per-class NMS thresholds under the configured scheme."""
    if cfg.scheme == SCHEME_FIXED:
        return {c.id: cfg.fixed_threshold for c in categories}
    if cfg.scheme == SCHEME_DISCRETE:
        return {c.id: threshold_discrete(c.group, cfg) for c in categories}
    stats = categories.group_stats()
    return {c.id: threshold_linear(c.cf, c.group, stats, cfg) for c in categories}


def match_proposals_to_gt(boxes, scores, gt_boxes, gt_classes,
                          fg_iou: float = 0.5) -> list[Proposal]:
    """Assign each raw box the class of its best-overlapping ground truth.

    A box becomes a foreground proposal of the class of its maximum-IoU
    ground truth when that IoU reaches ``fg_iou``; otherwise background.
    IoU ties resolve to the lower ground-truth index.
    """
    if not 0.0 < fg_iou < 1.0:
        raise ValidationError(f"fg_iou must be in (0, 1), got {fg_iou}")
    boxes = as_box_array(boxes, "boxes")
    scores = as_finite_array(scores, "scores", ndim=1)
    if scores.shape[0] != boxes.shape[0]:
        raise ValidationError("boxes and scores must have equal length")
    gt_boxes = as_box_array(gt_boxes, "gt boxes")
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    if gt_boxes.shape[0] == 0:
        return [Proposal(b, float(s), BACKGROUND) for b, s in zip(boxes, scores)]
    overlaps = iou_matrix(boxes, gt_boxes)
    best = np.argmax(overlaps, axis=1)
    out = []
    for i in range(boxes.shape[0]):
        cls = int(gt_classes[best[i]]) if overlaps[i, best[i]] >= fg_iou else BACKGROUND
        out.append(Proposal(boxes[i], float(scores[i]), cls))
    return out


def class_aware_nms_indices(boxes, scores, class_ids,
                            thresholds: Mapping[int, float],
                            background_threshold: float = 0.7) -> list[int]:
    """Greedy NMS keep-indices where each kept box applies its own threshold.

    Boxes are visited by descending score (ties by input order); every
    not-yet-kept box whose IoU with the kept box exceeds the kept box's
    class threshold is suppressed.
    """
    boxes = as_box_array(boxes, "boxes")
    scores = as_finite_array(scores, "scores", ndim=1)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    n = boxes.shape[0]
    if scores.shape[0] != n or class_ids.shape[0] != n:
        raise ValidationError("boxes, scores and class_ids must have equal length")
    thr = np.empty(n)
    for i, cls in enumerate(class_ids):
        cls = int(cls)
        if cls == BACKGROUND:
            thr[i] = background_threshold
        elif cls in thresholds:
            thr[i] = thresholds[cls]
        else:
            raise ValidationError(f"no NMS threshold defined for class {cls}")
    order = np.argsort(-scores, kind="stable")
    suppressed = np.zeros(n, dtype=bool)
    keep: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(int(i))
        rest = order[pos + 1 :]
        rest = rest[~suppressed[rest]]
        if rest.size:
            overlaps = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
            suppressed[rest[overlaps > thr[i]]] = True
    return keep


def class_aware_nms(proposals: Sequence[Proposal],
                    thresholds: Mapping[int, float],
                    background_threshold: float = 0.7) -> list[Proposal]:
    """Greedy class-aware NMS over proposals, returned in keep order."""
    if not proposals:
        return []
    boxes = np.stack([p.box for p in proposals])
    scores = np.array([p.score for p in proposals])
    class_ids = np.array([p.class_id for p in proposals])
    keep = class_aware_nms_indices(boxes, scores, class_ids, thresholds,
                                   background_threshold)
    return [proposals[i] for i in keep]


def survival_stats(proposals: Sequence[Proposal], kept: Sequence[Proposal],
                   categories: CategorySet) -> dict[str, dict[str, int]]:
    """Input/kept counts per frequency group (plus background)."""
    counts = {g.value: {"input": 0, "kept": 0} for g in FrequencyGroup}
    counts["background"] = {"input": 0, "kept": 0}

    def bucket(p: Proposal) -> str:
        if p.class_id == BACKGROUND:
            return "background"
        return categories.group_of(p.class_id).value

    for p in proposals:
        counts[bucket(p)]["input"] += 1
    for p in kept:
        counts[bucket(p)]["kept"] += 1
    return counts
