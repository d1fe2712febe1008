"""Deterministic synthetic demo dataset for the end-to-end pipeline.

Twenty classes across all three frequency groups, three prior-knowledge
trees, informative-parent logit records, grouped proposals with ground
truth, and jittered detections. Everything derives from one seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io
from .evaluation import Detection, GroundTruth
from .nms import BACKGROUND, Proposal
from .scoring import LogitRecord
from .taxonomy import CategorySet, Forest, make_category
from .tree_builder import build_geometric_tree, build_lexical_tree, build_visual_tree

N_CLASSES = 20
N_RECORDS = 240
N_IMAGES = 12


def _demo_categories() -> CategorySet:
    cfs = {}
    for cid in range(N_CLASSES):
        if cid < 8:
            cfs[cid] = 120 + 110 * cid
        elif cid < 15:
            cfs[cid] = 12 + 11 * (cid - 8)
        else:
            cfs[cid] = 1 + 2 * (cid - 15)
    return CategorySet(
        make_category(cid, f"class_{cid:02d}", cfs[cid]) for cid in range(N_CLASSES)
    )


def _demo_masks(rng: np.random.Generator) -> list[list[np.ndarray]]:
    side = 16
    class_masks = []
    for cid in range(N_CLASSES):
        family = cid // 5
        base = np.zeros((side, side), dtype=np.uint8)
        if family == 0:
            base[2:14, 2:14] = 1
        elif family == 1:
            base[:, : side // 2] = 1
        elif family == 2:
            base[: side // 2, :] = 1
        else:
            base[5:11, 5:11] = 1
        masks = []
        for k in range(3):
            shifted = np.roll(base, shift=k - 1, axis=(cid + k) % 2)
            masks.append(shifted)
        class_masks.append(masks)
    return class_masks


def _demo_records(rng: np.random.Generator, forest: Forest) -> list[LogitRecord]:
    records = []
    for i in range(N_RECORDS):
        gt = i % N_CLASSES
        fine = rng.normal(0.0, 1.0, size=N_CLASSES)
        fine[gt] += 2.5
        parent_logits = {}
        for tree in forest:
            z = rng.normal(0.0, 0.5, size=tree.M)
            z[tree.leaf_parent[gt]] += 3.0
            parent_logits[tree.tree_id] = z
        records.append(LogitRecord(
            object_id=f"obj_{i:04d}",
            fine_logits=fine,
            parent_logits=parent_logits,
            gt_class=gt,
        ))
    return records


def _demo_boxes(rng: np.random.Generator):
    """Grouped proposals, ground truths, and detections over abstract images."""
    proposals: list[tuple[str, Proposal]] = []
    gts: list[GroundTruth] = []
    dets: list[Detection] = []
    for img in range(N_IMAGES):
        image_id = f"img_{img:03d}"
        class_ids = [(3 * img + k) % N_CLASSES for k in range(3)]
        for slot, cid in enumerate(class_ids):
            x = 10.0 + 30.0 * slot
            y = 10.0 + 6.0 * (img % 3)
            base = np.array([x, y, x + 20.0, y + 20.0])
            gts.append(GroundTruth(image_id, base, cid))
            # Overlapping pair (IoU 2/3 height overlap ~ 0.78) plus one far box.
            near = base + np.array([0.0, 2.5, 0.0, 2.5])
            far = base + np.array([0.0, 30.0, 0.0, 30.0])
            for box, s in ((base, 0.95), (near, 0.85), (far, 0.40)):
                proposals.append((image_id, Proposal(
                    box, float(s - 0.01 * slot + 0.002 * img), cid)))
            jitter = rng.uniform(-1.5, 1.5, size=4)
            dets.append(Detection(image_id, base + jitter, cid,
                                  float(rng.uniform(0.6, 0.99))))
        # Background clutter and an occasional duplicate-class false positive.
        bg = np.array([80.0, 80.0, 95.0, 95.0]) + img
        proposals.append((image_id, Proposal(bg, 0.30, BACKGROUND)))
        if img % 4 == 0:
            fp_cls = (class_ids[0] + 7) % N_CLASSES
            dets.append(Detection(image_id, bg, fp_cls, float(rng.uniform(0.3, 0.5))))
    return proposals, gts, dets


def make_demo_dataset(out_dir, seed: int = 0) -> dict[str, Path]:
    """Write the demo inputs into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    categories = _demo_categories()
    hierarchy = [(c.name, f"family_{c.id // 4}") for c in categories]
    features = rng.normal(0.0, 0.4, size=(N_CLASSES, 6))
    for cid in range(N_CLASSES):
        features[cid, cid % 5] += 8.0
    class_masks = _demo_masks(rng)

    lexical = build_lexical_tree(hierarchy, categories)
    visual = build_visual_tree(features, n_parents=5, random_state=seed)
    geometric = build_geometric_tree(class_masks, n_parents=4, grid_size=(8, 8),
                                     random_state=seed)
    forest = Forest([lexical, visual, geometric])

    records = _demo_records(rng, forest)
    proposals, gts, dets = _demo_boxes(rng)

    paths = {
        "categories": out / "categories.jsonl",
        "hierarchy": out / "hierarchy.json",
        "features": out / "features.npy",
        "masks": out / "masks.jsonl",
        "tree_lexical": out / "tree_lexical.json",
        "tree_visual": out / "tree_visual.json",
        "tree_geometric": out / "tree_geometric.json",
        "records": out / "records.jsonl",
        "proposals": out / "proposals.jsonl",
        "ground_truth": out / "ground_truth.jsonl",
        "detections": out / "detections.jsonl",
    }
    io.write_categories(categories, paths["categories"])
    io.write_hierarchy(hierarchy, paths["hierarchy"])
    io.write_feature_table(features, paths["features"])
    io.write_class_masks(class_masks, paths["masks"])
    io.write_tree(lexical, paths["tree_lexical"])
    io.write_tree(visual, paths["tree_visual"])
    io.write_tree(geometric, paths["tree_geometric"])
    io.write_logit_records(records, paths["records"])
    io.write_proposals(proposals, paths["proposals"])
    io.write_ground_truths(gts, paths["ground_truth"])
    io.write_detections(dets, paths["detections"])
    return paths
