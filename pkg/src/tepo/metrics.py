"""Segmentation metrics: Dice overlap, confusion regions, exact boundary
distance transforms, and interaction-failure counting.

Distance transforms treat everything outside the grid as background, so
"distance to the boundary" stays well-defined for regions touching the edge.
Comparisons are done on exact integer keys (squared distances for the
euclidean metric) so argmax/tie-break results are reproducible bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .grid import BinaryMask

MISUNDERSTANDING_THRESHOLD = -0.1

DISTANCE_METRICS = ("euclidean", "chebyshev", "manhattan")


@dataclass(frozen=True, eq=False)
class ErrorRegions:
    """Disagreement between a prediction and the ground truth."""

    false_negative: BinaryMask  # truth=1, pred=0
    false_positive: BinaryMask  # truth=0, pred=1
    error: BinaryMask           # their union


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-pixel distance to the nearest pixel outside the region.

    Zero outside the region; interior values are >= 1 because the grid border
    counts as a boundary.
    """

    data: np.ndarray  # float64


def _require_same_shape(pred: BinaryMask, truth: BinaryMask) -> None:
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")


def dice(pred: BinaryMask, truth: BinaryMask) -> float:
    """2|P∩Y| / (|P|+|Y|); defined as 1.0 when both masks are empty."""
    _require_same_shape(pred, truth)
    p = pred.as_bool()
    t = truth.as_bool()
    denom = int(p.sum()) + int(t.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / denom


def error_regions(pred: BinaryMask, truth: BinaryMask) -> ErrorRegions:
    _require_same_shape(pred, truth)
    p = pred.as_bool()
    t = truth.as_bool()
    fn = t & ~p
    fp = p & ~t
    return ErrorRegions(BinaryMask(fn), BinaryMask(fp), BinaryMask(fn | fp))


def interior_distance_keys(region: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Exact integer comparison keys for interior distances.

    Euclidean keys are squared distances; chebyshev/manhattan keys are the
    distances themselves. Keys are 0 exactly on region-exterior pixels.
    """
    if metric not in DISTANCE_METRICS:
        raise ValueError(f"unknown distance metric {metric!r}")
    region = np.asarray(region, dtype=bool)
    h, w = region.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = region
    if metric == "euclidean":
        d = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        return np.rint(d * d).astype(np.int64)
    chamfer = "chessboard" if metric == "chebyshev" else "taxicab"
    d = ndimage.distance_transform_cdt(padded, metric=chamfer)[1:-1, 1:-1]
    return d.astype(np.int64)


def distance_transform(region: BinaryMask, metric: str = "euclidean") -> DistanceField:
    keys = interior_distance_keys(region.as_bool(), metric)
    if metric == "euclidean":
        return DistanceField(np.sqrt(keys.astype(np.float64)))
    return DistanceField(keys.astype(np.float64))


def max_interior_distance_key(region: np.ndarray, metric: str = "euclidean") -> int:
    """Largest interior distance key; 0 for an empty region."""
    keys = interior_distance_keys(region, metric)
    return int(keys.max(initial=0))


def farthest_interior_point(
    region: BinaryMask, metric: str = "euclidean"
) -> Optional[tuple[int, int, float]]:
    """Most interior pixel of the region, or None if the region is empty.

    Ties are broken by smallest row, then smallest column.
    """
    mask = region.as_bool()
    if not mask.any():
        return None
    keys = interior_distance_keys(mask, metric)
    # np.argmax returns the first maximum in row-major order, which is
    # exactly the (row, col) tie-break.
    flat = int(np.argmax(keys))
    r, c = divmod(flat, keys.shape[1])
    key = keys[r, c]
    d = float(np.sqrt(key)) if metric == "euclidean" else float(key)
    return r, c, d


def count_misunderstandings(
    rewards_per_case: Sequence[Sequence[float]], step: int
) -> int:
    """Number of cases whose reward at 1-based `step` is strictly below -0.1.

    Cases whose episode stopped before `step` never interacted there and are
    not counted.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return sum(
        1
        for rewards in rewards_per_case
        if len(rewards) >= step and rewards[step - 1] < MISUNDERSTANDING_THRESHOLD
    )
