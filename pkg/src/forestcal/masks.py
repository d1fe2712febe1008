"""Run-length encoding of binary masks, mask IoU, and shape vectors.

RLE string format: ``"<H>x<W>:c0,c1,c2,..."`` where the counts describe
runs of the mask flattened in column-major order, alternating 0-runs and
1-runs and always starting with the (possibly zero-length) 0-run. Example:
a 2x2 mask with only the top-right pixel set is ``"2x2:2,1,1"``.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .validation import as_binary_mask


def rle_encode(mask) -> str:
    mask = as_binary_mask(mask)
    h, w = mask.shape
    flat = mask.flatten(order="F")
    if flat.size == 0:
        return f"{h}x{w}:"
    boundaries = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    runs = (ends - starts).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return f"{h}x{w}:" + ",".join(str(int(c)) for c in runs)


def rle_decode(rle: str) -> np.ndarray:
    try:
        shape_part, counts_part = rle.split(":", 1)
        h_s, w_s = shape_part.split("x")
        h, w = int(h_s), int(w_s)
        counts = [int(c) for c in counts_part.split(",")] if counts_part else []
    except (ValueError, AttributeError) as exc:
        raise ValidationError(f"malformed RLE string {rle!r}") from exc
    if h < 0 or w < 0 or any(c < 0 for c in counts):
        raise ValidationError(f"malformed RLE string {rle!r}")
    total = sum(counts)
    if total != h * w:
        raise ValidationError(f"RLE counts sum to {total}, expected {h * w} for {h}x{w}")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    value = 0
    for c in counts:
        if value:
            flat[pos : pos + c] = 1
        pos += c
        value ^= 1
    return flat.reshape((h, w), order="F")


def mask_iou(a, b) -> float:
    """IoU of two equal-shape binary masks; 0 by convention when both empty."""
    a = as_binary_mask(a, "mask a")
    b = as_binary_mask(b, "mask b")
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    return inter / union


def resize_nearest(mask, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize using pixel-center sampling."""
    mask = np.asarray(mask)
    h, w = mask.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise ValidationError(f"target grid must be positive, got {out_hw}")
    rows = np.minimum((((np.arange(oh) + 0.5) * h) / oh).astype(np.int64), h - 1)
    cols = np.minimum((((np.arange(ow) + 0.5) * w) / ow).astype(np.int64), w - 1)
    return mask[np.ix_(rows, cols)]


def shape_vector(masks, grid_size: tuple[int, int]) -> np.ndarray:
    """Average of a class's masks resized to a common grid, flattened.

    The result lives in [0, 1]^(h*w) and summarizes the class's typical
    silhouette regardless of the native mask resolutions.
    """
    if not masks:
        raise ValidationError("class has no masks to summarize")
    acc = np.zeros(grid_size[0] * grid_size[1], dtype=np.float64)
    for m in masks:
        acc += resize_nearest(as_binary_mask(m), grid_size).ravel().astype(np.float64)
    return acc / len(masks)
