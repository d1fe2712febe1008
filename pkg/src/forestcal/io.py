"""File formats and streaming readers/writers.

Formats (all JSON is UTF-8):

- categories: JSONL, one object per line:
  ``{"id": int, "name": str, "cf": int, "group": "rare"|"common"|"frequent"?}``
- tree: single JSON document:
  ``{"tree_id": str, "M": int, "parent_names": [str], "leaf_parent": [int]}``
- logit records: JSONL:
  ``{"object_id": str, "gt_class": int|null, "fine_logits": [float],
     "parent_logits": {tree_id: [float]}, "parent_probs": {tree_id: [float]}?}``
- scores: JSONL: ``{"object_id": str, "gt_class": int|null, "mode": str,
  "label": int, "scores": [float]}``
- proposals: JSONL: ``{"image_id": str, "box": [x1,y1,x2,y2],
  "score": float, "class_id": int}`` (-1 = background); kept output adds
  ``"kept_rank"`` (0-based keep order within the image)
- ground truth: JSONL: ``{"image_id": str, "box": [...], "class_id": int,
  "mask_rle": str?}``
- detections: JSONL: ``{"image_id": str, "box": [...], "class_id": int,
  "score": float, "mask_rle": str|null}``
- feature table: ``.npy`` (numpy binary), or text with a JSON header line
  ``{"n": int, "d": int}`` followed by n lines of d space-separated floats
- hierarchy: single JSON object mapping category name -> parent name
- class masks: JSONL: ``{"class_id": int, "masks": [rle_str, ...]}``

Readers raise DataFileError naming the file and line of the first
offending record.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataFileError, ValidationError
from .evaluation import Detection, EvalReport, GroundTruth
from .masks import rle_decode, rle_encode
from .nms import Proposal
from .scoring import LogitRecord, ScoreResult
from .taxonomy import CategorySet, ClassificationTree, make_category, validate_tree


def _iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFileError(path, lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataFileError(path, lineno, "record must be a JSON object")
            yield lineno, obj


def _field(obj: dict, key: str, path, lineno: int, types, required: bool = True):
    if key not in obj or obj[key] is None:
        if required:
            raise DataFileError(path, lineno, f"missing field {key!r}")
        return None
    value = obj[key]
    if not isinstance(value, types):
        raise DataFileError(path, lineno, f"field {key!r} has wrong type {type(value).__name__}")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


# -- categories ---------------------------------------------------------

def read_categories(path, strict_groups: bool = False) -> CategorySet:
    cats = []
    for lineno, obj in _iter_jsonl(path):
        try:
            cats.append(make_category(
                id=_field(obj, "id", path, lineno, int),
                name=_field(obj, "name", path, lineno, str),
                cf=_field(obj, "cf", path, lineno, int),
                group=_field(obj, "group", path, lineno, str, required=False),
            ))
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc
    try:
        return CategorySet(cats, strict_groups=strict_groups)
    except ValidationError as exc:
        raise DataFileError(path, None, str(exc)) from exc


def write_categories(categories: CategorySet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in categories:
            fh.write(_dump({"id": c.id, "name": c.name, "cf": c.cf,
                            "group": c.group.value}) + "\n")


# -- trees ---------------------------------------------------------------

def read_tree(path) -> ClassificationTree:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFileError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DataFileError(path, None, "tree file must hold a JSON object")
    tree_id = _field(obj, "tree_id", path, None, str)
    m = _field(obj, "M", path, None, int)
    parent_names = _field(obj, "parent_names", path, None, list)
    leaf_parent = _field(obj, "leaf_parent", path, None, list)
    if m != len(parent_names):
        raise DataFileError(path, None, f"M={m} but {len(parent_names)} parent names")
    if not all(isinstance(p, str) for p in parent_names):
        raise DataFileError(path, None, "parent_names must be strings")
    if not all(isinstance(i, int) for i in leaf_parent):
        raise DataFileError(path, None, "leaf_parent must be integers")
    tree = ClassificationTree(tree_id=tree_id, parent_names=tuple(parent_names),
                              leaf_parent=np.array(leaf_parent, dtype=np.int64))
    try:
        return validate_tree(tree, len(leaf_parent))
    except ValidationError as exc:
        raise DataFileError(path, None, str(exc)) from exc


def write_tree(tree: ClassificationTree, path) -> None:
    doc = {
        "tree_id": tree.tree_id,
        "M": tree.M,
        "parent_names": list(tree.parent_names),
        "leaf_parent": [int(p) for p in tree.leaf_parent],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(doc) + "\n")


# -- logit records -------------------------------------------------------

def _float_list(value, key: str, path, lineno: int) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise DataFileError(path, lineno, f"field {key!r} must be a list of numbers")
    return np.asarray(value, dtype=np.float64)


def iter_logit_records_numbered(path, n_classes: int | None = None) -> Iterator[tuple[int, LogitRecord]]:
    """Like iter_logit_records but yields (line number, record) pairs."""
    for lineno, obj in _iter_jsonl(path):
        fine = _float_list(_field(obj, "fine_logits", path, lineno, list),
                           "fine_logits", path, lineno)
        if n_classes is not None and fine.shape[0] != n_classes:
            raise DataFileError(
                path, lineno,
                f"fine_logits has {fine.shape[0]} entries, expected {n_classes}")
        parent_logits = {}
        for tid, vec in (_field(obj, "parent_logits", path, lineno, dict, required=False) or {}).items():
            parent_logits[tid] = _float_list(vec, f"parent_logits[{tid}]", path, lineno)
        parent_probs = {}
        for tid, vec in (_field(obj, "parent_probs", path, lineno, dict, required=False) or {}).items():
            parent_probs[tid] = _float_list(vec, f"parent_probs[{tid}]", path, lineno)
        try:
            yield lineno, LogitRecord(
                object_id=_field(obj, "object_id", path, lineno, str),
                fine_logits=fine,
                parent_logits=parent_logits,
                parent_probs=parent_probs,
                gt_class=_field(obj, "gt_class", path, lineno, int, required=False),
            )
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc


def iter_logit_records(path, n_classes: int | None = None) -> Iterator[LogitRecord]:
    for _, rec in iter_logit_records_numbered(path, n_classes):
        yield rec


def read_logit_records(path, n_classes: int | None = None) -> list[LogitRecord]:
    return list(iter_logit_records(path, n_classes))


def write_logit_records(records: Iterable[LogitRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            doc = {
                "object_id": rec.object_id,
                "gt_class": rec.gt_class,
                "fine_logits": [float(v) for v in rec.fine_logits],
                "parent_logits": {tid: [float(v) for v in vec]
                                  for tid, vec in rec.parent_logits.items()},
            }
            if rec.parent_probs:
                doc["parent_probs"] = {tid: [float(v) for v in vec]
                                       for tid, vec in rec.parent_probs.items()}
            fh.write(_dump(doc) + "\n")


# -- scores --------------------------------------------------------------

def write_scores(rows: Iterable[tuple[str, int | None, ScoreResult]], path) -> None:
    """Rows are (object_id, gt_class, result)."""
    with open(path, "w", encoding="utf-8") as fh:
        for object_id, gt_class, result in rows:
            fh.write(_dump({
                "object_id": object_id,
                "gt_class": gt_class,
                "mode": result.mode,
                "label": result.label,
                "scores": [float(v) for v in result.scores],
            }) + "\n")


def iter_scores(path) -> Iterator[tuple[str, int | None, ScoreResult]]:
    for lineno, obj in _iter_jsonl(path):
        scores = _float_list(_field(obj, "scores", path, lineno, list), "scores", path, lineno)
        label = _field(obj, "label", path, lineno, int)
        if not 0 <= label < scores.shape[0]:
            raise DataFileError(path, lineno, f"label {label} out of range")
        yield (
            _field(obj, "object_id", path, lineno, str),
            _field(obj, "gt_class", path, lineno, int, required=False),
            ScoreResult(scores=scores, label=label,
                        mode=_field(obj, "mode", path, lineno, str)),
        )


# -- proposals and ground truth -------------------------------------------

def _read_box(obj, path, lineno) -> np.ndarray:
    box = _field(obj, "box", path, lineno, list)
    if len(box) != 4 or not all(isinstance(v, (int, float)) for v in box):
        raise DataFileError(path, lineno, "field 'box' must be [x1, y1, x2, y2]")
    return np.asarray(box, dtype=np.float64)


def iter_proposals(path) -> Iterator[tuple[str, Proposal]]:
    for lineno, obj in _iter_jsonl(path):
        try:
            prop = Proposal(
                box=_read_box(obj, path, lineno),
                score=float(_field(obj, "score", path, lineno, (int, float))),
                class_id=_field(obj, "class_id", path, lineno, int),
            )
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc
        yield _field(obj, "image_id", path, lineno, str), prop


def iter_proposal_groups(path) -> Iterator[tuple[str, list[Proposal]]]:
    """Yield (image_id, proposals) for input grouped contiguously by image.

    Streaming NMS holds one image in memory at a time, which requires the
    file to keep each image's proposals contiguous; a reappearing image id
    is an error.
    """
    seen: set[str] = set()
    current: str | None = None
    batch: list[Proposal] = []
    for image_id, prop in iter_proposals(path):
        if image_id != current:
            if current is not None:
                yield current, batch
            if image_id in seen:
                raise DataFileError(
                    path, None,
                    f"proposals for image {image_id!r} are not contiguous; "
                    "group the file by image_id")
            seen.add(image_id)
            current = image_id
            batch = []
        batch.append(prop)
    if current is not None:
        yield current, batch


def write_proposals(items: Iterable[tuple[str, Proposal]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, p in items:
            fh.write(_dump({
                "image_id": image_id,
                "box": [float(v) for v in p.box],
                "score": float(p.score),
                "class_id": int(p.class_id),
            }) + "\n")


def write_kept_proposals(groups: Iterable[tuple[str, list[Proposal]]], path) -> None:
    """Kept proposals per image, annotated with their 0-based keep rank."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, kept in groups:
            for rank, p in enumerate(kept):
                fh.write(_dump({
                    "image_id": image_id,
                    "box": [float(v) for v in p.box],
                    "score": float(p.score),
                    "class_id": int(p.class_id),
                    "kept_rank": rank,
                }) + "\n")


def read_ground_truths(path) -> list[GroundTruth]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        mask_rle = _field(obj, "mask_rle", path, lineno, str, required=False)
        try:
            out.append(GroundTruth(
                image_id=_field(obj, "image_id", path, lineno, str),
                box=_read_box(obj, path, lineno),
                class_id=_field(obj, "class_id", path, lineno, int),
                mask=rle_decode(mask_rle) if mask_rle else None,
            ))
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc
    return out


def write_ground_truths(gts: Iterable[GroundTruth], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in gts:
            doc = {
                "image_id": g.image_id,
                "box": [float(v) for v in g.box],
                "class_id": int(g.class_id),
            }
            if g.mask is not None:
                doc["mask_rle"] = rle_encode(g.mask)
            fh.write(_dump(doc) + "\n")


# -- detections ------------------------------------------------------------

def read_detections(path) -> list[Detection]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        mask_rle = _field(obj, "mask_rle", path, lineno, str, required=False)
        try:
            out.append(Detection(
                image_id=_field(obj, "image_id", path, lineno, str),
                box=_read_box(obj, path, lineno),
                class_id=_field(obj, "class_id", path, lineno, int),
                score=float(_field(obj, "score", path, lineno, (int, float))),
                mask=rle_decode(mask_rle) if mask_rle else None,
            ))
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc
    return out


def write_detections(dets: Iterable[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in dets:
            fh.write(_dump({
                "image_id": d.image_id,
                "box": [float(v) for v in d.box],
                "class_id": int(d.class_id),
                "score": float(d.score),
                "mask_rle": rle_encode(d.mask) if d.mask is not None else None,
            }) + "\n")


# -- feature tables ----------------------------------------------------------

def read_feature_table(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        table = np.load(path)
        if table.ndim != 2:
            raise DataFileError(path, None, f"feature table must be 2-D, got shape {table.shape}")
        return np.asarray(table, dtype=np.float64)
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            n, d = int(header["n"]), int(header["d"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFileError(path, 1, 'expected JSON header {"n": ..., "d": ...}') from exc
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            values = line.split()
            if len(values) != d:
                raise DataFileError(path, lineno, f"expected {d} values, got {len(values)}")
            try:
                rows.append([float(v) for v in values])
            except ValueError as exc:
                raise DataFileError(path, lineno, "non-numeric value") from exc
    if len(rows) != n:
        raise DataFileError(path, None, f"expected {n} rows, got {len(rows)}")
    return np.asarray(rows, dtype=np.float64)


def write_feature_table(table: np.ndarray, path) -> None:
    path = Path(path)
    table = np.asarray(table, dtype=np.float64)
    if path.suffix == ".npy":
        np.save(path, table)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"n": int(table.shape[0]), "d": int(table.shape[1])}) + "\n")
        for row in table:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# -- hierarchy -----------------------------------------------------------------

def read_hierarchy(path) -> list[tuple[str, str]]:
    """Ordered (category name, parent name) pairs; duplicate keys are an error."""
    with open(path, encoding="utf-8") as fh:
        try:
            pairs = json.load(fh, object_pairs_hook=lambda p: p)
        except json.JSONDecodeError as exc:
            raise DataFileError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(pairs, list) or not all(
        isinstance(p, tuple) and len(p) == 2
        and isinstance(p[0], str) and isinstance(p[1], str)
        for p in pairs
    ):
        raise DataFileError(path, None, "hierarchy must map category names to parent names")
    seen: set[str] = set()
    for name, _ in pairs:
        if name in seen:
            raise DataFileError(path, None, f"category {name!r} is mapped to two parents")
        seen.add(name)
    return pairs


def write_hierarchy(pairs, path) -> None:
    if isinstance(pairs, dict):
        pairs = list(pairs.items())
    doc = "{" + ", ".join(f"{json.dumps(k)}: {json.dumps(v)}" for k, v in pairs) + "}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc + "\n")


# -- class mask fixtures ---------------------------------------------------------

def read_class_masks(path) -> list[list[np.ndarray]]:
    """Per-class mask lists, indexed by class id (ids must be dense)."""
    by_class: dict[int, list[np.ndarray]] = {}
    for lineno, obj in _iter_jsonl(path):
        class_id = _field(obj, "class_id", path, lineno, int)
        if class_id in by_class:
            raise DataFileError(path, lineno, f"duplicate class id {class_id}")
        rles = _field(obj, "masks", path, lineno, list)
        if not rles or not all(isinstance(r, str) for r in rles):
            raise DataFileError(path, lineno, "field 'masks' must be a non-empty list of RLE strings")
        try:
            by_class[class_id] = [rle_decode(r) for r in rles]
        except ValidationError as exc:
            raise DataFileError(path, lineno, str(exc)) from exc
    if sorted(by_class) != list(range(len(by_class))):
        raise DataFileError(path, None, "class ids must be dense 0..N-1")
    return [by_class[i] for i in range(len(by_class))]


def write_class_masks(class_masks, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for class_id, masks in enumerate(class_masks):
            fh.write(_dump({
                "class_id": class_id,
                "masks": [rle_encode(m) for m in masks],
            }) + "\n")


# -- reports -----------------------------------------------------------------------

def write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, ensure_ascii=False, indent=2) + "\n")


def write_eval_report(report: EvalReport, path, include_curves: bool = True) -> None:
    write_json(report.to_dict(include_curves=include_curves), path)


def write_per_class_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class_id,ap\n")
        for cls, ap in sorted(report.per_class_ap.items()):
            fh.write(f"{cls},{ap!r}\n")


def write_histogram_csv(hist, path) -> None:
    """Plot-ready CSV: bin_lo,bin_hi,mass."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,mass\n")
        for lo, hi, mass in zip(hist.edges[:-1], hist.edges[1:], hist.masses):
            fh.write(f"{float(lo)!r},{float(hi)!r},{float(mass)!r}\n")
