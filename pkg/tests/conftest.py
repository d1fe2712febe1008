import numpy as np
import pytest

from forestcal import CategorySet, ClassificationTree, Forest, LogitRecord, make_category


def make_categories(cfs):
    """CategorySet from a list of frequencies (ids follow list order)."""
    return CategorySet(
        make_category(i, f"class_{i:03d}", cf) for i, cf in enumerate(cfs)
    )


def single_parent_tree(n, tree_id="single"):
    return ClassificationTree(tree_id, ("root_parent",), np.zeros(n, dtype=np.int64))


def paired_tree(n, m, tree_id="paired"):
    """Leaves assigned round-robin to m parents."""
    return ClassificationTree(
        tree_id,
        tuple(f"p{j}" for j in range(m)),
        np.arange(n, dtype=np.int64) % m,
    )


def record_from_probs(fine_probs, parent_probs_by_tree, object_id="obj", gt=None):
    """Record whose softmaxes reproduce the given probabilities exactly."""
    return LogitRecord(
        object_id,
        np.log(np.asarray(fine_probs, dtype=np.float64)),
        {tid: np.log(np.asarray(p, dtype=np.float64))
         for tid, p in parent_probs_by_tree.items()},
        gt_class=gt,
    )


def random_record(rng, n, trees, object_id="obj", scale=5.0, gt=None):
    return LogitRecord(
        object_id,
        rng.uniform(-scale, scale, size=n),
        {t.tree_id: rng.uniform(-scale, scale, size=t.M) for t in trees},
        gt_class=gt,
    )


@pytest.fixture
def sedan_tree():
    return ClassificationTree("lex", ("vehicle", "other"), np.array([0, 1]))


@pytest.fixture
def sedan_record(sedan_tree):
    # Fine probabilities (0.7, 0.3), parent probabilities (0.6, 0.4).
    return record_from_probs([0.7, 0.3], {"lex": [0.6, 0.4]})


@pytest.fixture
def categories_mixed():
    # 3 frequent, 3 common, 3 rare.
    return make_categories([500, 250, 101, 100, 55, 11, 10, 4, 1])


@pytest.fixture
def forest3():
    """Three structurally different trees over 12 leaves."""
    n = 12
    t1 = paired_tree(n, 3, "alpha")
    t2 = ClassificationTree("beta", ("b0", "b1"), np.array([0] * 6 + [1] * 6))
    t3 = ClassificationTree(
        "gamma", ("g0", "g1", "g2", "g3"), np.arange(n, dtype=np.int64) // 3
    )
    return Forest([t1, t2, t3])
