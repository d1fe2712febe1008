"""Post-network pipeline for long-tailed detection: classification-tree and
forest calibration of classifier logits, class-aware NMS resampling, noisy
logit diagnostics, and COCO-style evaluation with frequency-group breakdown.
"""

from .analysis import (
    Histogram,
    HistogramSpec,
    NoisyLogitConfig,
    count_noisy_logits,
    mean_noisy_per_object,
    noisy_shares,
    score_density,
)
from .cluster import KMeans, kmeans
from .errors import DataFileError, TreeValidationError, ValidationError
from .evaluation import (
    Detection,
    EvalReport,
    GroundTruth,
    IOU_THRESHOLDS,
    PRCurve,
    average_precision,
    evaluate,
    match_detections,
    pr_curve,
)
from .masks import mask_iou, rle_decode, rle_encode, resize_nearest, shape_vector
from .nms import (
    BACKGROUND,
    Proposal,
    ResamplingConfig,
    class_aware_nms,
    class_aware_nms_indices,
    class_thresholds,
    iou,
    iou_matrix,
    match_proposals_to_gt,
    survival_stats,
    threshold_discrete,
    threshold_linear,
)
from .scoring import (
    ForestScorer,
    LogitRecord,
    SCORING_MODES,
    ScoreResult,
    calibrate_tree,
    forest_vote_scores,
    infer_label_forest_vote,
    infer_label_tree,
    log_path_score,
    log_path_scores,
    log_softmax,
    path_score,
    score_baseline,
    score_forest,
    score_preliminary,
    score_record,
    score_tree,
    softmax,
)
from .taxonomy import (
    Category,
    CategorySet,
    ClassificationTree,
    Forest,
    FrequencyGroup,
    assign_group,
    geo_mask_channel,
    make_category,
    tree_violations,
    validate_tree,
)
from .tree_builder import (
    build_geometric_tree,
    build_lexical_tree,
    build_visual_tree,
    mask_shape_table,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "Category",
    "CategorySet",
    "ClassificationTree",
    "DataFileError",
    "Detection",
    "EvalReport",
    "Forest",
    "ForestScorer",
    "FrequencyGroup",
    "GroundTruth",
    "Histogram",
    "HistogramSpec",
    "IOU_THRESHOLDS",
    "KMeans",
    "LogitRecord",
    "NoisyLogitConfig",
    "PRCurve",
    "Proposal",
    "ResamplingConfig",
    "SCORING_MODES",
    "ScoreResult",
    "TreeValidationError",
    "ValidationError",
    "assign_group",
    "average_precision",
    "build_geometric_tree",
    "build_lexical_tree",
    "build_visual_tree",
    "calibrate_tree",
    "class_aware_nms",
    "class_aware_nms_indices",
    "class_thresholds",
    "count_noisy_logits",
    "evaluate",
    "forest_vote_scores",
    "geo_mask_channel",
    "infer_label_forest_vote",
    "infer_label_tree",
    "iou",
    "iou_matrix",
    "kmeans",
    "log_path_score",
    "log_path_scores",
    "log_softmax",
    "mask_iou",
    "mask_shape_table",
    "match_detections",
    "match_proposals_to_gt",
    "mean_noisy_per_object",
    "make_category",
    "noisy_shares",
    "path_score",
    "pr_curve",
    "resize_nearest",
    "rle_decode",
    "rle_encode",
    "score_baseline",
    "score_density",
    "score_forest",
    "score_preliminary",
    "score_record",
    "score_tree",
    "shape_vector",
    "softmax",
    "survival_stats",
    "threshold_discrete",
    "threshold_linear",
    "tree_violations",
    "validate_tree",
]
