"""State featurization for the value network.

Channels: 0 image intensities, 1 current foreground probability, 2 disks at
positive clicks, 3 disks at negative clicks, 4 union of box interiors.
"""
from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .grid import PointLabel, PointPrompt, paint_box, paint_disk

if TYPE_CHECKING:  # pragma: no cover
    from .environment import EnvState

FEATURE_CHANNELS = 5
PROMPT_DISK_RADIUS = 3


def featurize(state: "EnvState") -> np.ndarray:
    """(5, H, W) float64 encoding of (image, probability, prompt history)."""
    h, w = state.case.shape
    out = np.zeros((FEATURE_CHANNELS, h, w))
    out[0] = np.clip(state.case.image.data, 0.0, 1.0)
    out[1] = state.prob.data
    for p in state.prompts:
        if isinstance(p, PointPrompt):
            ch = 2 if p.label is PointLabel.POSITIVE else 3
            paint_disk(out[ch], p.row, p.col, PROMPT_DISK_RADIUS)
        else:
            paint_box(out[4], p)
    return out
