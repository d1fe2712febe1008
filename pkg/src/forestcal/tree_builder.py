"""Construct classification trees from the three kinds of prior knowledge.

Visual and geometric trees cluster per-class descriptor vectors with
k-means; the lexical tree consumes a ready-made name -> parent-name map.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .cluster import KMeans
from .errors import ValidationError
from .masks import shape_vector
from .taxonomy import CategorySet, ClassificationTree, validate_tree
from .validation import as_finite_array

DEFAULT_VISUAL_PARENTS = 25
DEFAULT_GEOMETRIC_PARENTS = 50
DEFAULT_MASK_GRID = (28, 28)


def _cluster_tree(table: np.ndarray, n_parents: int, tree_id: str, *,
                  random_state: int, max_iter: int, tol: float) -> ClassificationTree:
    est = KMeans(n_parents, random_state=random_state, max_iter=max_iter, tol=tol).fit(table)
    tree = ClassificationTree(
        tree_id=tree_id,
        parent_names=tuple(f"{tree_id}_{k:03d}" for k in range(n_parents)),
        leaf_parent=est.labels_,
    )
    return validate_tree(tree, table.shape[0])


def build_visual_tree(features, n_parents: int = DEFAULT_VISUAL_PARENTS, *,
                      random_state: int = 0, max_iter: int = 100, tol: float = 0.0,
                      tree_id: str = "visual") -> ClassificationTree:
    """Cluster per-class visual feature vectors into parent classes.

    ``features`` is an (N, D) table with one row per fine-grained class,
    row index = class id.
    """
    table = as_finite_array(features, "feature table", ndim=2)
    return _cluster_tree(table, n_parents, tree_id,
                         random_state=random_state, max_iter=max_iter, tol=tol)


def mask_shape_table(class_masks: Sequence[Iterable], grid_size: tuple[int, int]) -> np.ndarray:
    """Stack per-class mask shape vectors into an (N, h*w) table."""
    rows = []
    for class_id, masks in enumerate(class_masks):
        masks = list(masks)
        if not masks:
            raise ValidationError(f"class {class_id} has no masks")
        rows.append(shape_vector(masks, grid_size))
    if not rows:
        raise ValidationError("no classes provided")
    return np.stack(rows)


def build_geometric_tree(class_masks: Sequence[Iterable],
                         n_parents: int = DEFAULT_GEOMETRIC_PARENTS, *,
                         grid_size: tuple[int, int] = DEFAULT_MASK_GRID,
                         random_state: int = 0, max_iter: int = 100, tol: float = 0.0,
                         tree_id: str = "geometric") -> ClassificationTree:
    """Cluster per-class mask silhouettes into parent classes.

    ``class_masks[i]`` is the list of binary ground-truth masks of class i.
    Each mask is resized to ``grid_size`` (nearest neighbor) and the class
    is summarized by the element-wise mean before clustering.
    """
    table = mask_shape_table(class_masks, grid_size)
    return _cluster_tree(table, n_parents, tree_id,
                         random_state=random_state, max_iter=max_iter, tol=tol)


def build_lexical_tree(hierarchy: Mapping[str, str] | Sequence[tuple[str, str]],
                       categories: CategorySet, *,
                       tree_id: str = "lexical") -> ClassificationTree:
    """Build a tree from a category-name -> parent-name map.

    Parent order is the order of first appearance among entries that name a
    known category; entries for unknown names are ignored. Every category
    must be mapped exactly once.
    """
    pairs = list(hierarchy.items()) if isinstance(hierarchy, Mapping) else list(hierarchy)
    known = {c.name: c.id for c in categories}
    if len(known) != len(categories):
        raise ValidationError("category names must be unique to build a lexical tree")

    parent_index: dict[str, int] = {}
    leaf_parent = np.full(len(categories), -1, dtype=np.int64)
    for name, parent in pairs:
        class_id = known.get(name)
        if class_id is None:
            continue
        if leaf_parent[class_id] >= 0:
            raise ValidationError(f"category {name!r} is mapped to two parents")
        if parent not in parent_index:
            parent_index[parent] = len(parent_index)
        leaf_parent[class_id] = parent_index[parent]

    missing = [c.name for c in categories if leaf_parent[c.id] < 0]
    if missing:
        raise ValidationError(
            f"hierarchy file does not cover categories: {', '.join(missing[:10])}"
        )
    tree = ClassificationTree(
        tree_id=tree_id,
        parent_names=tuple(parent_index),
        leaf_parent=leaf_parent,
    )
    return validate_tree(tree, len(categories))
