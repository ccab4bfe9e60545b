"""Simulated expert: turns an abstract prompt form into a concrete prompt.

Clicks go to the most interior pixel of the relevant confusion region
(foreground -> false negative, background -> false positive, center -> error
union) and a region only admits a click when its most interior pixel is at
least `min_interaction_distance` pixels from the region boundary. The box is
the target region's tight bounding box dilated by `box_margin` pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Action,
    BinaryMask,
    PointLabel,
    PointPrompt,
    Prompt,
    clip_box,
)
from .metrics import (
    DISTANCE_METRICS,
    error_regions,
    farthest_interior_point,
    max_interior_distance_key,
)

BOX_ANCHORS = ("truth", "false_negative")


@dataclass(frozen=True)
class ClinicianConfig:
    min_interaction_distance: int = 2
    box_margin: int = 10
    allow_repeat_box: bool = False
    box_anchor: str = "truth"
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        if self.min_interaction_distance < 1:
            raise ValueError("min_interaction_distance must be >= 1")
        if self.box_margin < 0:
            raise ValueError("box_margin must be >= 0")
        if self.box_anchor not in BOX_ANCHORS:
            raise ValueError(f"box_anchor must be one of {BOX_ANCHORS}")
        if self.metric not in DISTANCE_METRICS:
            raise ValueError(f"metric must be one of {DISTANCE_METRICS}")

    @property
    def min_distance_key(self) -> int:
        """Availability gate in exact integer key units."""
        d = self.min_interaction_distance
        return d * d if self.metric == "euclidean" else d


def _box_anchor_region(
    pred: BinaryMask, truth: BinaryMask, cfg: ClinicianConfig
) -> np.ndarray:
    if cfg.box_anchor == "truth":
        return truth.as_bool()
    return truth.as_bool() & ~pred.as_bool()


def available_actions(
    pred: BinaryMask,
    truth: BinaryMask,
    cfg: ClinicianConfig = ClinicianConfig(),
    box_used: bool = False,
) -> frozenset[Action]:
    """Prompt forms the clinician is currently willing to issue."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    regions = error_regions(pred, truth)
    gate = cfg.min_distance_key
    avail = set()
    for action, region in (
        (Action.FOREGROUND, regions.false_negative),
        (Action.BACKGROUND, regions.false_positive),
        (Action.CENTER, regions.error),
    ):
        if max_interior_distance_key(region.as_bool(), cfg.metric) >= gate:
            avail.add(action)
    if _box_anchor_region(pred, truth, cfg).any() and (
        cfg.allow_repeat_box or not box_used
    ):
        avail.add(Action.BOX)
    return frozenset(avail)


def realize_prompt(
    action: Action,
    pred: BinaryMask,
    truth: BinaryMask,
    cfg: ClinicianConfig = ClinicianConfig(),
    box_used: bool = False,
    check_available: bool = True,
) -> Prompt:
    """Concrete prompt for `action`; raises if the action is unavailable.

    Callers that already hold the availability mask for exactly this
    (pred, truth, box_used) state may pass check_available=False; the
    realized prompt is identical either way.
    """
    if check_available and action not in available_actions(pred, truth, cfg, box_used):
        raise ValueError(f"action {Action(action).name} is unavailable")
    regions = error_regions(pred, truth)
    if action == Action.BOX:
        anchor = _box_anchor_region(pred, truth, cfg)
        rows = np.flatnonzero(anchor.any(axis=1))
        cols = np.flatnonzero(anchor.any(axis=0))
        m = cfg.box_margin
        h, w = truth.shape
        return clip_box(
            int(rows[0]) - m, int(cols[0]) - m,
            int(rows[-1]) + m, int(cols[-1]) + m,
            h, w,
        )
    region = {
        Action.FOREGROUND: regions.false_negative,
        Action.BACKGROUND: regions.false_positive,
        Action.CENTER: regions.error,
    }[Action(action)]
    point = farthest_interior_point(region, cfg.metric)
    assert point is not None  # guaranteed by the availability gate
    r, c, _ = point
    if action == Action.FOREGROUND:
        label = PointLabel.POSITIVE
    elif action == Action.BACKGROUND:
        label = PointLabel.NEGATIVE
    else:
        label = PointLabel.POSITIVE if truth.data[r, c] else PointLabel.NEGATIVE
    return PointPrompt(r, c, label)
