"""Category metadata and the classification tree/forest structures.

A classification tree has exactly 3 levels: a root, M parent classes, and
the N fine-grained leaf classes shared by every tree of a forest. Leaves
are identified by their integer index into the category set; names are
metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .errors import TreeValidationError, ValidationError

RARE_MAX_CF = 10
COMMON_MAX_CF = 100


class FrequencyGroup(str, Enum):
    RARE = "rare"
    COMMON = "common"
    FREQUENT = "frequent"


def assign_group(cf: int) -> FrequencyGroup:
    """Map a category frequency (images containing the class) to its group.

    1-10 images -> rare, 11-100 -> common, >100 -> frequent. A frequency of
    zero means the class never appears in training and has no defined group.
    """
    if cf < 0:
        raise ValidationError(f"category frequency must be non-negative, got {cf}")
    if cf == 0:
        raise ValidationError("category frequency 0: unseen category has no frequency group")
    if cf <= RARE_MAX_CF:
        return FrequencyGroup.RARE
    if cf <= COMMON_MAX_CF:
        return FrequencyGroup.COMMON
    return FrequencyGroup.FREQUENT


@dataclass(frozen=True)
class Category:
    """One fine-grained class: dense integer id, name, and frequency."""

    id: int
    name: str
    cf: int
    group: FrequencyGroup


class CategorySet:
    """The ordered set of N fine-grained classes.

    Ids must be dense and unique, exactly {0, ..., N-1}. When ``strict_groups``
    is set, supplied group labels are re-derived from cf and a mismatch is an
    error; otherwise a supplied label wins (datasets that ship official group
    labels may disagree with the cf rule through annotation quirks).
    """

    def __init__(self, categories: Iterable[Category], strict_groups: bool = False):
        cats = sorted(categories, key=lambda c: c.id)
        if not cats:
            raise ValidationError("category set must contain at least one category")
        ids = [c.id for c in cats]
        if ids != list(range(len(cats))):
            raise ValidationError(
                f"category ids must be exactly 0..{len(cats) - 1}, got {sorted(set(ids))[:8]}..."
            )
        if strict_groups:
            for c in cats:
                derived = assign_group(c.cf)
                if derived is not c.group:
                    raise ValidationError(
                        f"category {c.id} ({c.name}): group {c.group.value!r} "
                        f"inconsistent with cf={c.cf} (expected {derived.value!r})"
                    )
        self.categories: tuple[Category, ...] = tuple(cats)
        self.cfs = np.array([c.cf for c in cats], dtype=np.int64)
        self.cfs.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.categories)

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Category]:
        return iter(self.categories)

    def __getitem__(self, class_id: int) -> Category:
        return self.categories[class_id]

    def group_of(self, class_id: int) -> FrequencyGroup:
        return self.categories[class_id].group

    def group_stats(self) -> dict[FrequencyGroup, tuple[int, int]]:
        """Per-group (cf_min, cf_max) over the categories present."""
        stats: dict[FrequencyGroup, tuple[int, int]] = {}
        for c in self.categories:
            lo, hi = stats.get(c.group, (c.cf, c.cf))
            stats[c.group] = (min(lo, c.cf), max(hi, c.cf))
        return stats

    def __eq__(self, other) -> bool:
        return isinstance(other, CategorySet) and self.categories == other.categories


def make_category(id: int, name: str, cf: int, group: str | FrequencyGroup | None = None) -> Category:
    """Build a Category, deriving the group from cf when not supplied."""
    if group is None:
        grp = assign_group(cf)
    else:
        grp = FrequencyGroup(group)
        if cf == 0:
            raise ValidationError(f"category {id} ({name}): cf=0 is not a valid frequency")
    return Category(id=id, name=name, cf=cf, group=grp)


@dataclass(frozen=True, eq=False)
class ClassificationTree:
    """3-level tree: root -> M named parents -> N leaves.

    ``leaf_parent[i]`` is the parent index of leaf (fine-grained class) i.
    Immutable after construction; safe to share across threads.
    """

    tree_id: str
    parent_names: tuple[str, ...]
    leaf_parent: np.ndarray = field(repr=False)

    def __post_init__(self):
        lp = np.asarray(self.leaf_parent, dtype=np.int64).copy()
        lp.setflags(write=False)
        object.__setattr__(self, "leaf_parent", lp)
        object.__setattr__(self, "parent_names", tuple(self.parent_names))

    @property
    def M(self) -> int:
        return len(self.parent_names)

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_parent.shape[0])

    def children(self, parent: int) -> np.ndarray:
        return np.flatnonzero(self.leaf_parent == parent)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ClassificationTree)
            and self.tree_id == other.tree_id
            and self.parent_names == other.parent_names
            and np.array_equal(self.leaf_parent, other.leaf_parent)
        )


def tree_violations(tree: ClassificationTree, n_classes: int) -> list[str]:
    """All structural invariant violations of ``tree`` against N classes."""
    problems: list[str] = []
    m = tree.M
    if m < 1:
        problems.append("tree has no parent classes")
    if m > n_classes:
        problems.append(f"M={m} exceeds leaf count N={n_classes}")
    lp = tree.leaf_parent
    if lp.ndim != 1:
        return problems + [f"leaf_parent must be 1-D, got shape {lp.shape}"]
    if lp.shape[0] != n_classes:
        problems.append(f"leaf_parent covers {lp.shape[0]} leaves, expected {n_classes}")
    for leaf in range(min(lp.shape[0], n_classes)):
        parent = int(lp[leaf])
        if not 0 <= parent < m:
            problems.append(f"leaf {leaf} maps to out-of-range parent {parent}")
    present = set(int(p) for p in lp if 0 <= p < m)
    for parent in range(m):
        if parent not in present:
            problems.append(f"parent {parent} ({tree.parent_names[parent]!r}) has no children")
    return problems


def validate_tree(tree: ClassificationTree, n_classes: int) -> ClassificationTree:
    """Return ``tree`` if structurally valid, else raise with every violation."""
    problems = tree_violations(tree, n_classes)
    if problems:
        raise TreeValidationError(problems)
    return tree


class Forest:
    """T classification trees over the same leaf set, with unique tree ids."""

    def __init__(self, trees: Iterable[ClassificationTree]):
        trees = tuple(trees)
        if not trees:
            raise ValidationError("forest must contain at least one tree")
        n = trees[0].n_leaves
        for t in trees:
            if t.n_leaves != n:
                raise ValidationError(
                    f"tree {t.tree_id!r} has {t.n_leaves} leaves, expected {n} "
                    "(all trees must share the leaf set)"
                )
            validate_tree(t, n)
        ids = [t.tree_id for t in trees]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"tree ids must be unique, got {ids}")
        self.trees: tuple[ClassificationTree, ...] = trees

    @property
    def n_leaves(self) -> int:
        return self.trees[0].n_leaves

    @property
    def tree_ids(self) -> tuple[str, ...]:
        return tuple(t.tree_id for t in self.trees)

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self) -> Iterator[ClassificationTree]:
        return iter(self.trees)

    def get(self, tree_id: str) -> ClassificationTree:
        for t in self.trees:
            if t.tree_id == tree_id:
                return t
        raise ValidationError(f"forest has no tree {tree_id!r} (have {list(self.tree_ids)})")

    def __eq__(self, other) -> bool:
        return isinstance(other, Forest) and self.trees == other.trees


def geo_mask_channel(class_id: int, geo_tree: ClassificationTree) -> int:
    """Mask-head output channel for a class: its parent in the geometric tree."""
    if not 0 <= class_id < geo_tree.n_leaves:
        raise ValidationError(
            f"class id {class_id} out of range [0, {geo_tree.n_leaves})"
        )
    return int(geo_tree.leaf_parent[class_id])
