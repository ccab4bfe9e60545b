"""Shared fixtures and independent brute-force oracles.

The oracles here deliberately avoid the library code paths they check:
distance keys come from an O(n^2) scan over exterior pixels, convolution from
nested loops, gradients from central finite differences.
"""
from __future__ import annotations

import numpy as np
import pytest

from tepo.grid import BinaryMask, Case, Grid2D
from tepo.synthdata import SynthConfig, generate_case


def brute_force_interior_sq(mask: np.ndarray) -> np.ndarray:
    """Exact squared euclidean distance to the nearest zero pixel, with
    everything outside the grid counting as zero."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.int64)
    zeros = np.argwhere(~mask)
    for r, c in np.argwhere(mask):
        border = min(r + 1, h - r, c + 1, w - c) ** 2
        if len(zeros):
            d2 = ((zeros[:, 0] - r) ** 2 + (zeros[:, 1] - c) ** 2).min()
            border = min(border, int(d2))
        out[r, c] = border
    return out


def brute_force_farthest(mask: np.ndarray):
    """Row-major-first argmax of the brute-force field; None when empty."""
    keys = brute_force_interior_sq(mask)
    if keys.max(initial=0) == 0:
        return None
    flat = int(np.argmax(keys))
    r, c = divmod(flat, keys.shape[1])
    return r, c, float(np.sqrt(keys[r, c]))


def conv2d_naive(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                 stride: int, pad: int) -> np.ndarray:
    """Direct nested-loop convolution over one sample (C, H, W)."""
    c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for co in range(c_out):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride : i * stride + k, j * stride : j * stride + k]
                out[co, i, j] = np.sum(patch * weight[co]) + bias[co]
    return out


def random_mask(rng: np.random.Generator, h: int, w: int, p: float = 0.5) -> BinaryMask:
    return BinaryMask(rng.random((h, w)) < p)


@pytest.fixture(scope="session")
def default_cases() -> list[Case]:
    return [generate_case(SynthConfig(master_seed=1234), i) for i in range(8)]


@pytest.fixture()
def small_case() -> Case:
    """8x8 case with a 4x4 block of foreground."""
    truth = np.zeros((8, 8), dtype=np.uint8)
    truth[2:6, 2:6] = 1
    image = 0.3 + 0.4 * truth.astype(float)
    return Case("tiny", Grid2D(image), BinaryMask(truth), seed=42)
