"""Noisy-logit diagnostics and confidence-score density histograms.

A value f_i (raw, tree-calibrated, or forest-averaged) is a noisy logit
when its normalized share violates an epsilon band relative to the ground
truth: the ground-truth share falling below 1 - eps_gt, or a negative
class's share exceeding eps_neg. Shares are scale-invariant, so the
counting works identically on raw exponential values and on normalized
scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .scoring import LogitRecord, ScoreResult, score_forest, score_tree, softmax
from .taxonomy import Forest
from .validation import as_finite_array

SOURCE_RAW = "raw_fine"
SOURCE_FOREST = "forest"


@dataclass(frozen=True)
class NoisyLogitConfig:
    eps_gt: float = 0.1
    eps_neg: float = 0.1

    def __post_init__(self):
        for name in ("eps_gt", "eps_neg"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must be strictly inside (0, 1), got {v}")


def count_noisy_logits(values, gt_class: int, cfg: NoisyLogitConfig) -> tuple[int, int]:
    """(ground-truth noisy 0/1, count of noisy negative classes).

    ``values`` are non-negative class evidence values with a positive sum;
    each value's share is its fraction of the total.
    """
    v = as_finite_array(values, "values", ndim=1)
    if (v < 0).any():
        raise ValidationError("values must be non-negative")
    total = v.sum()
    if total <= 0:
        raise ValidationError("values sum to zero; shares are undefined")
    if not 0 <= gt_class < v.shape[0]:
        raise ValidationError(f"gt_class {gt_class} out of range [0, {v.shape[0]})")
    shares = v / total
    gt_noisy = int(shares[gt_class] < 1.0 - cfg.eps_gt)
    negatives = shares > cfg.eps_neg
    negatives[gt_class] = False
    return gt_noisy, int(np.count_nonzero(negatives))


def noisy_shares(rec: LogitRecord, source: str, forest: Forest | None = None) -> np.ndarray:
    """Normalized shares of the chosen value family for one record.

    ``source`` is ``raw_fine``, ``tree:<tree_id>``, or ``forest``.
    """
    if source == SOURCE_RAW:
        return softmax(rec.fine_logits)
    if source == SOURCE_FOREST:
        if forest is None:
            raise ValidationError("source 'forest' requires a forest")
        return score_forest(rec, forest).scores
    if source.startswith("tree:"):
        if forest is None:
            raise ValidationError(f"source {source!r} requires a forest")
        return score_tree(rec, forest.get(source[len("tree:"):])).scores
    raise ValidationError(
        f"unknown noisy-logit source {source!r} (use 'raw_fine', 'tree:<id>' or 'forest')"
    )


def mean_noisy_per_object(records: Iterable[LogitRecord], source: str,
                          cfg: NoisyLogitConfig,
                          forest: Forest | None = None) -> float:
    """Mean over records of (gt_noisy + neg_noisy) for the chosen source."""
    total = 0
    n = 0
    for rec in records:
        if rec.gt_class is None:
            raise ValidationError(f"record {rec.object_id!r} has no gt_class")
        gt_noisy, neg_noisy = count_noisy_logits(noisy_shares(rec, source, forest),
                                                 rec.gt_class, cfg)
        total += gt_noisy + neg_noisy
        n += 1
    if n == 0:
        raise ValidationError("no records to analyze")
    return total / n


@dataclass(frozen=True)
class HistogramSpec:
    """Equal-width bins partitioning [0, 1] exactly."""

    bin_count: int = 50

    def __post_init__(self):
        if self.bin_count < 1:
            raise ValidationError(f"bin_count must be positive, got {self.bin_count}")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bin_count + 1)


@dataclass
class Histogram:
    masses: np.ndarray
    edges: np.ndarray
    is_empty: bool


def score_density(results: Sequence[ScoreResult], gt_classes: Sequence[int],
                  split: str, spec: HistogramSpec = HistogramSpec()) -> Histogram:
    """Mass histogram of max scores over the correct or incorrect split.

    Bin masses sum to 1; an empty split yields an all-zero histogram with
    ``is_empty`` set.
    """
    if split not in ("correct", "incorrect"):
        raise ValidationError(f"split must be 'correct' or 'incorrect', got {split!r}")
    if len(results) != len(gt_classes):
        raise ValidationError("results and gt_classes must have equal length")
    want_correct = split == "correct"
    values = [
        r.max_score
        for r, gt in zip(results, gt_classes)
        if gt is not None and (r.label == gt) == want_correct
    ]
    edges = spec.edges
    if not values:
        return Histogram(np.zeros(spec.bin_count), edges, True)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(counts / counts.sum(), edges, False)
