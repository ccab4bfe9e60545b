"""Promptable-segmentation backends.

`MockSegmenter` is a deterministic synthetic stand-in for a foundation
segmenter. It reveals the ground truth inside a "resolved" set (disks around
clicks, box interiors) and corrupts a fraction q of the pixels outside it with
smooth value-noise that is redrawn from the full prompt history on every
predict. Growing the prompt set therefore monotonically expands the resolved
set while the unresolved remainder can still flip either way -- which is what
makes prompt-form choice consequential and occasionally produces large
negative Dice steps.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .grid import Case, PointLabel, PointPrompt, ProbMap, PromptSet, \
    paint_box, paint_disk
from .hashing import fnv1a64, splitmix64_array


class BackendError(Exception):
    """Base class for segmentation-backend failures."""


class SegmenterBackend(Protocol):
    """One backend instance serves one episode at a time."""

    def set_case(self, case: Case) -> None: ...

    def predict(self, prompts: PromptSet) -> ProbMap: ...


@dataclass(frozen=True)
class MockConfig:
    resolve_radius: int = 6
    corruption_fraction: float = 0.35
    noise_cell: int = 8
    resolved_conf: float = 1.0
    unresolved_conf: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.corruption_fraction <= 1.0:
            raise ValueError("corruption_fraction must lie in [0, 1]")
        if self.resolve_radius < 1 or self.noise_cell < 1:
            raise ValueError("radii must be >= 1")
        for conf in (self.resolved_conf, self.unresolved_conf):
            if not 0.5 < conf <= 1.0:
                raise ValueError("confidences must lie in (0.5, 1]")


def prompt_digest(seed: int, prompts: PromptSet) -> int:
    """Stable 64-bit hash of (case seed, prompt history in insertion order)."""
    blob = bytearray(struct.pack("<Q", seed))
    for p in prompts:
        if isinstance(p, PointPrompt):
            blob += struct.pack("<cii?", b"P", p.row, p.col,
                                p.label is PointLabel.POSITIVE)
        else:
            blob += struct.pack("<ciiii", b"B", p.r0, p.c0, p.r1, p.c1)
    return fnv1a64(bytes(blob))


def resolved_mask(prompts: PromptSet, radius: int) -> np.ndarray:
    """Union of click disks and box interiors; grows monotonically."""
    out = np.zeros((prompts.height, prompts.width), dtype=np.uint8)
    for p in prompts:
        if isinstance(p, PointPrompt):
            paint_disk(out, p.row, p.col, radius)
        else:
            paint_box(out, p)
    return out.astype(bool)


def corruption_mask(height: int, width: int, digest: int, cfg: MockConfig) -> np.ndarray:
    """Smooth boolean noise covering (as close as possible) fraction q.

    Lattice values come from a counter-based generator keyed by (digest,
    lattice index); the bilinear interpolation is thresholded at its own
    empirical q-quantile so the corrupted pixel count is round(q*H*W) exactly.
    """
    n = height * width
    k = int(round(cfg.corruption_fraction * n))
    if k <= 0:
        return np.zeros((height, width), dtype=bool)
    if k >= n:
        return np.ones((height, width), dtype=bool)
    cell = cfg.noise_cell
    ni = (height - 1) // cell + 2
    nj = (width - 1) // cell + 2
    ii = np.arange(ni, dtype=np.uint64)[:, None]
    jj = np.arange(nj, dtype=np.uint64)[None, :]
    keys = (
        np.uint64(digest)
        ^ (ii * np.uint64(0x9E3779B97F4A7C15))
        ^ (jj * np.uint64(0xC2B2AE3D27D4EB4F))
    )
    lattice = (splitmix64_array(keys) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    r = np.arange(height)
    c = np.arange(width)
    i0 = r // cell
    j0 = c // cell
    fr = ((r % cell) / cell)[:, None]
    fc = ((c % cell) / cell)[None, :]
    v00 = lattice[np.ix_(i0, j0)]
    v01 = lattice[np.ix_(i0, j0 + 1)]
    v10 = lattice[np.ix_(i0 + 1, j0)]
    v11 = lattice[np.ix_(i0 + 1, j0 + 1)]
    field = (
        v00 * (1 - fr) * (1 - fc)
        + v01 * (1 - fr) * fc
        + v10 * fr * (1 - fc)
        + v11 * fr * fc
    )
    threshold = np.partition(field.ravel(), k)[k]
    return field < threshold


def mock_predict(case: Case, prompts: PromptSet, cfg: MockConfig = MockConfig()) -> ProbMap:
    """Deterministic synthetic prediction for (case, full prompt history)."""
    if not prompts:
        raise ValueError("predict requires at least one prompt")
    if (prompts.height, prompts.width) != case.shape:
        raise ValueError(
            f"prompt grid {prompts.height}x{prompts.width} != case {case.shape}"
        )
    truth = case.truth.as_bool()
    resolved = resolved_mask(prompts, cfg.resolve_radius)
    digest = prompt_digest(case.seed, prompts)
    corrupted = corruption_mask(case.truth.height, case.truth.width, digest, cfg)
    label = np.where(resolved, truth, truth ^ corrupted)
    conf = np.where(resolved, cfg.resolved_conf, cfg.unresolved_conf)
    return ProbMap(np.where(label, conf, 1.0 - conf))


class MockSegmenter:
    """Synthetic `SegmenterBackend`; bind one instance per episode."""

    def __init__(self, config: MockConfig = MockConfig()) -> None:
        self.config = config
        self._case: Case | None = None

    def set_case(self, case: Case) -> None:
        self._case = case

    def predict(self, prompts: PromptSet) -> ProbMap:
        if self._case is None:
            raise BackendError("predict called before set_case")
        return mock_predict(self._case, prompts, self.config)
