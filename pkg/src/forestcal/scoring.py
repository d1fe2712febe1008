"""Classifier-output mathematics: softmax, tree calibration, forest scoring.

Every quantity that multiplies exponentials is computed in the log domain
with max subtraction. Node values are the exponential form f_v = e^{z_v}
of raw classifier outputs z_v; a path score is the product of node values
from the root to a leaf, and a tree calibrates leaf logits by the parent
probability: f'_i = f_i * p(parent(i)).

Parent inputs per tree come either as raw parent-node logits (preferred;
probabilities are recomputed by softmax) or as pre-normalized probability
vectors, which are validated to sum to 1 within 1e-6. When only
probabilities are supplied, path scores treat the tree's parent node
values as normalized (sum of parent f_u equal to 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import ValidationError
from .taxonomy import ClassificationTree, Forest
from .validation import as_finite_array, as_logit_vector, as_probability_vector

# Floor for log of serialized probabilities; softmax of finite logits can
# never reach it, but an input file may carry literal zeros.
LOG_PROB_FLOOR = -745.0

MODE_BASELINE = "baseline"
MODE_PRELIMINARY = "preliminary"
MODE_TREE = "tree"
MODE_FOREST_SCORE = "forest_score"
MODE_FOREST_VOTE = "forest_vote"
SCORING_MODES = (MODE_BASELINE, MODE_PRELIMINARY, MODE_TREE, MODE_FOREST_SCORE, MODE_FOREST_VOTE)


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; order-preserving, rows sum to 1."""
    z = as_finite_array(logits, "logits")
    if z.size == 0:
        raise ValidationError("softmax of an empty vector is undefined")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = as_finite_array(logits, "logits")
    if z.size == 0:
        raise ValidationError("log_softmax of an empty vector is undefined")
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


@dataclass
class LogitRecord:
    """One object's raw classifier outputs.

    fine_logits are the N pre-exponential leaf logits; parent_logits maps a
    tree id to that tree's M_t parent-node logits. parent_probs is the
    alternative pre-normalized form. gt_class is the ground-truth leaf when
    known (required by the diagnostics, optional for scoring).
    """

    object_id: str
    fine_logits: np.ndarray
    parent_logits: dict[str, np.ndarray] = field(default_factory=dict)
    parent_probs: dict[str, np.ndarray] = field(default_factory=dict)
    gt_class: int | None = None

    def __post_init__(self):
        self.fine_logits = as_logit_vector(self.fine_logits, "fine_logits")
        self.parent_logits = {
            tid: as_logit_vector(v, f"parent_logits[{tid}]")
            for tid, v in self.parent_logits.items()
        }
        self.parent_probs = {
            tid: as_probability_vector(v, f"parent_probs[{tid}]")
            for tid, v in self.parent_probs.items()
        }

    @property
    def n_classes(self) -> int:
        return int(self.fine_logits.shape[0])


@dataclass
class ScoreResult:
    """Per-class scores and the inferred label for one record and mode."""

    scores: np.ndarray
    label: int
    mode: str

    @property
    def max_score(self) -> float:
        return float(self.scores[self.label])


def _tree_parent_input(rec: LogitRecord, tree: ClassificationTree) -> tuple[np.ndarray | None, np.ndarray | None]:
    """(raw parent logits | None, parent probabilities | None) for a tree."""
    tid = tree.tree_id
    if rec.n_classes != tree.n_leaves:
        raise ValidationError(
            f"record {rec.object_id!r} has {rec.n_classes} fine logits, "
            f"tree {tid!r} has {tree.n_leaves} leaves"
        )
    if tid in rec.parent_logits:
        z = rec.parent_logits[tid]
        if z.shape[0] != tree.M:
            raise ValidationError(
                f"record {rec.object_id!r}: parent_logits[{tid}] has length "
                f"{z.shape[0]}, tree has M={tree.M}"
            )
        return z, None
    if tid in rec.parent_probs:
        p = rec.parent_probs[tid]
        if p.shape[0] != tree.M:
            raise ValidationError(
                f"record {rec.object_id!r}: parent_probs[{tid}] has length "
                f"{p.shape[0]}, tree has M={tree.M}"
            )
        return None, p
    raise ValidationError(
        f"record {rec.object_id!r} has no parent logits for tree {tid!r}"
    )


def _parent_probs(rec: LogitRecord, tree: ClassificationTree) -> np.ndarray:
    z, p = _tree_parent_input(rec, tree)
    return softmax(z) if z is not None else p


def _log_parent_probs(rec: LogitRecord, tree: ClassificationTree) -> np.ndarray:
    z, p = _tree_parent_input(rec, tree)
    if z is not None:
        return log_softmax(z)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(p), LOG_PROB_FLOOR)


def _parent_node_logits(rec: LogitRecord, tree: ClassificationTree) -> np.ndarray:
    """Raw parent node logits z_u, i.e. log of the node values f_u."""
    z, p = _tree_parent_input(rec, tree)
    if z is not None:
        return z
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(p), LOG_PROB_FLOOR)


def score_baseline(rec: LogitRecord) -> ScoreResult:
    """Plain softmax over the fine-grained logits; argmax label."""
    scores = softmax(rec.fine_logits)
    return ScoreResult(scores, int(np.argmax(scores)), MODE_BASELINE)


def score_preliminary(rec: LogitRecord, tree: ClassificationTree) -> ScoreResult:
    """Product model s_i = p(x_i) * p(parent(x_i)); does not renormalize."""
    p_fine = softmax(rec.fine_logits)
    p_parent = _parent_probs(rec, tree)
    scores = p_fine * p_parent[tree.leaf_parent]
    return ScoreResult(scores, int(np.argmax(scores)), f"{MODE_PRELIMINARY}:{tree.tree_id}")


def calibrate_tree(rec: LogitRecord, tree: ClassificationTree) -> np.ndarray:
    """Log of the calibrated leaf values: log f'_i = z_i + log p(parent(i))."""
    log_p = _log_parent_probs(rec, tree)
    return rec.fine_logits + log_p[tree.leaf_parent]


def score_tree(rec: LogitRecord, tree: ClassificationTree) -> ScoreResult:
    """Normalized calibrated values, s_i = f'_i / sum_a f'_a."""
    scores = softmax(calibrate_tree(rec, tree))
    return ScoreResult(scores, int(np.argmax(scores)), f"{MODE_TREE}:{tree.tree_id}")


def log_path_scores(rec: LogitRecord, tree: ClassificationTree) -> np.ndarray:
    """Log path scores for all leaves: log d(root->x_i) = z_i + z_parent(i)."""
    z_u = _parent_node_logits(rec, tree)
    return rec.fine_logits + z_u[tree.leaf_parent]


def log_path_score(rec: LogitRecord, tree: ClassificationTree, leaf: int) -> float:
    if not 0 <= leaf < rec.n_classes:
        raise ValidationError(f"leaf {leaf} out of range [0, {rec.n_classes})")
    return float(log_path_scores(rec, tree)[leaf])


def path_score(rec: LogitRecord, tree: ClassificationTree, leaf: int) -> float:
    """Exponential accessor for the root-to-leaf product of node values."""
    return float(np.exp(log_path_score(rec, tree, leaf)))


def infer_label_tree(rec: LogitRecord, tree: ClassificationTree) -> int:
    """Leaf with the maximum path score; identical to score_tree's label."""
    return int(np.argmax(log_path_scores(rec, tree)))


def _check_record_width(rec: LogitRecord, forest: Forest) -> None:
    if rec.n_classes != forest.n_leaves:
        raise ValidationError(
            f"record {rec.object_id!r} has {rec.n_classes} fine logits, "
            f"forest has {forest.n_leaves} leaves"
        )


def score_forest(rec: LogitRecord, forest: Forest) -> ScoreResult:
    """Average the per-tree calibrated values, then normalize.

    log f_mean_i = logsumexp_t(z_i + log p_t(parent_t(i))) - log T.
    """
    _check_record_width(rec, forest)
    calibrated = np.stack([calibrate_tree(rec, t) for t in forest])
    log_mean = logsumexp(calibrated, axis=0) - np.log(len(forest))
    scores = softmax(log_mean)
    return ScoreResult(scores, int(np.argmax(scores)), MODE_FOREST_SCORE)


def forest_vote_scores(rec: LogitRecord, forest: Forest) -> np.ndarray:
    """Normalized per-leaf sums of raw path scores across trees (diagnostic)."""
    _check_record_width(rec, forest)
    paths = np.stack([log_path_scores(rec, t) for t in forest])
    return softmax(logsumexp(paths, axis=0))


def infer_label_forest_vote(rec: LogitRecord, forest: Forest) -> int:
    """Plurality vote: argmax over leaves of the summed raw path scores."""
    _check_record_width(rec, forest)
    paths = np.stack([log_path_scores(rec, t) for t in forest])
    return int(np.argmax(logsumexp(paths, axis=0)))


def score_record(rec: LogitRecord, forest: Forest, mode: str,
                 tree_id: str | None = None) -> ScoreResult:
    """Dispatch one record through the requested scoring mode."""
    if mode == MODE_BASELINE:
        return score_baseline(rec)
    if mode in (MODE_PRELIMINARY, MODE_TREE):
        if tree_id is None:
            if len(forest) != 1:
                raise ValidationError(
                    f"mode {mode!r} needs a tree id when the forest has {len(forest)} trees"
                )
            tree = forest.trees[0]
        else:
            tree = forest.get(tree_id)
        return score_preliminary(rec, tree) if mode == MODE_PRELIMINARY else score_tree(rec, tree)
    if mode == MODE_FOREST_SCORE:
        return score_forest(rec, forest)
    if mode == MODE_FOREST_VOTE:
        scores = forest_vote_scores(rec, forest)
        return ScoreResult(scores, int(np.argmax(scores)), MODE_FOREST_VOTE)
    raise ValidationError(f"unknown scoring mode {mode!r} (choose from {SCORING_MODES})")


class ForestScorer(BaseEstimator):
    """Batch scorer over logit matrices with a scikit-learn style surface.

    Parameters
    ----------
    forest : Forest
        The classification forest to score against.
    mode : str
        One of ``baseline``, ``preliminary``, ``tree``, ``forest_score``,
        ``forest_vote``.
    tree_id : str or None
        Tree selector for the single-tree modes; defaults to the only tree
        of a one-tree forest.
    """

    def __init__(self, forest: Forest | None = None, mode: str = MODE_FOREST_SCORE,
                 tree_id: str | None = None):
        self.forest = forest
        self.mode = mode
        self.tree_id = tree_id

    def _resolved(self) -> tuple[Forest, ClassificationTree | None]:
        if self.forest is None:
            raise ValidationError("ForestScorer requires a forest")
        if self.mode not in SCORING_MODES:
            raise ValidationError(f"unknown scoring mode {self.mode!r}")
        tree = None
        if self.mode in (MODE_PRELIMINARY, MODE_TREE):
            if self.tree_id is not None:
                tree = self.forest.get(self.tree_id)
            elif len(self.forest) == 1:
                tree = self.forest.trees[0]
            else:
                raise ValidationError(f"mode {self.mode!r} needs tree_id")
        return self.forest, tree

    def fit(self, X=None, y=None):
        """No-op; present so the estimator composes with pipelines."""
        self._resolved()
        return self

    def _batch_parent(self, parent_logits, tree: ClassificationTree, n: int) -> np.ndarray:
        if not parent_logits or tree.tree_id not in parent_logits:
            raise ValidationError(f"missing parent logits for tree {tree.tree_id!r}")
        z = as_finite_array(parent_logits[tree.tree_id], f"parent_logits[{tree.tree_id}]", ndim=2)
        if z.shape != (n, tree.M):
            raise ValidationError(
                f"parent_logits[{tree.tree_id}] has shape {z.shape}, expected ({n}, {tree.M})"
            )
        return z

    def predict_proba(self, fine_logits, parent_logits=None) -> np.ndarray:
        """Per-class scores, one row per object.

        ``fine_logits`` is (n, N); ``parent_logits`` maps tree id to an
        (n, M_t) matrix, required for every mode except ``baseline``.
        """
        forest, tree = self._resolved()
        fine = as_finite_array(fine_logits, "fine_logits", ndim=2)
        n = fine.shape[0]
        if fine.shape[1] != forest.n_leaves:
            raise ValidationError(
                f"fine_logits has {fine.shape[1]} columns, forest has {forest.n_leaves} leaves"
            )
        if self.mode == MODE_BASELINE:
            return softmax(fine)
        if self.mode == MODE_PRELIMINARY:
            z = self._batch_parent(parent_logits, tree, n)
            return softmax(fine) * softmax(z)[:, tree.leaf_parent]
        if self.mode == MODE_TREE:
            z = self._batch_parent(parent_logits, tree, n)
            return softmax(fine + log_softmax(z)[:, tree.leaf_parent])
        stacked = np.stack([
            fine + self._per_tree_term(parent_logits, t, n) for t in forest
        ])
        if self.mode == MODE_FOREST_SCORE:
            return softmax(logsumexp(stacked, axis=0) - np.log(len(forest)))
        return softmax(logsumexp(stacked, axis=0))

    def _per_tree_term(self, parent_logits, tree: ClassificationTree, n: int) -> np.ndarray:
        z = self._batch_parent(parent_logits, tree, n)
        if self.mode == MODE_FOREST_SCORE:
            return log_softmax(z)[:, tree.leaf_parent]
        return z[:, tree.leaf_parent]

    def predict(self, fine_logits, parent_logits=None) -> np.ndarray:
        """Label per object under the configured mode."""
        return np.argmax(self.predict_proba(fine_logits, parent_logits), axis=1)
