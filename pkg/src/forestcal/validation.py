"""Small input-validation helpers used by the estimators and pipelines."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_finite_array(x, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Convert to a float64 array, rejecting NaN/Inf entries."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def as_logit_vector(x, name: str = "logits") -> np.ndarray:
    vec = as_finite_array(x, name, ndim=1)
    if vec.size == 0:
        raise ValidationError(f"{name} is empty")
    return vec


def as_probability_vector(p, name: str = "probabilities", tol: float = 1e-6) -> np.ndarray:
    """A finite non-negative vector summing to 1 within ``tol``."""
    vec = as_logit_vector(p, name)
    if (vec < 0).any():
        raise ValidationError(f"{name} contains negative entries")
    total = vec.sum()
    if abs(total - 1.0) > tol:
        raise ValidationError(f"{name} sums to {total!r}, expected 1 within {tol}")
    return vec


def as_box(b, name: str = "box") -> np.ndarray:
    """A finite [x1, y1, x2, y2] box with non-negative extent."""
    box = as_finite_array(b, name, ndim=1)
    if box.shape != (4,):
        raise ValidationError(f"{name} must have 4 coordinates, got {box.shape}")
    if box[2] < box[0] or box[3] < box[1]:
        raise ValidationError(f"{name} has negative extent: {box.tolist()}")
    return box


def as_box_array(b, name: str = "boxes") -> np.ndarray:
    """An (n, 4) array of valid boxes."""
    boxes = as_finite_array(b, name)
    if boxes.size == 0:
        return boxes.reshape(0, 4)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValidationError(f"{name} must have shape (n, 4), got {boxes.shape}")
    if (boxes[:, 2] < boxes[:, 0]).any() or (boxes[:, 3] < boxes[:, 1]).any():
        raise ValidationError(f"{name} contains boxes with negative extent")
    return boxes


def as_binary_mask(m, name: str = "mask") -> np.ndarray:
    """A 2-D array containing only 0/1 values, returned as uint8."""
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must be binary (0/1 values only)")
    return arr.astype(np.uint8)
