"""Core 2D grid types: images, binary masks, probability maps, prompts, cases.

Conventions used throughout the package:

* row-major ``(row, col)`` indexing with ``(0, 0)`` at the top-left;
* image intensities live in ``[0, 1]``;
* every type here is an immutable value after construction and safe to share
  read-only across concurrent workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator, Union

import numpy as np

MIN_IMAGE_SIDE = 8


class Action(IntEnum):
    """Prompt forms the agent can recommend at each interaction step."""

    FOREGROUND = 0  # positive click in the false-negative region
    BACKGROUND = 1  # negative click in the false-positive region
    CENTER = 2      # click at the error region's most interior pixel
    BOX = 3         # bounding box around the target region


class PointLabel(Enum):
    POSITIVE = "pos"
    NEGATIVE = "neg"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _check_2d(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must be non-empty, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class Grid2D:
    """A grayscale image slice."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        _check_2d(arr, "image")
        if arr.shape[0] < MIN_IMAGE_SIDE or arr.shape[1] < MIN_IMAGE_SIDE:
            raise ValueError(
                f"image sides must be >= {MIN_IMAGE_SIDE}, got {arr.shape}"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A {0,1}-valued grid (predictions, ground truth, error regions)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        arr = arr.astype(np.uint8)
        _check_2d(arr, "mask")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel foreground probability in [0, 1].

    Background probability is implicitly ``1 - value``; thresholding at 0.5
    yields a :class:`BinaryMask`.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        _check_2d(arr, "probability map")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, height: int, width: int) -> "ProbMap":
        return cls(np.zeros((height, width)))


def threshold_mask(prob: ProbMap) -> BinaryMask:
    """Threshold at strictly > 0.5, so an all-0.5 "no evidence" map is empty."""
    return BinaryMask(prob.data > 0.5)


@dataclass(frozen=True)
class PointPrompt:
    row: int
    col: int
    label: PointLabel

    def __post_init__(self) -> None:
        if not isinstance(self.label, PointLabel):
            raise ValueError(f"bad point label {self.label!r}")
        if self.row < 0 or self.col < 0:
            raise ValueError(f"negative point coordinates ({self.row}, {self.col})")


@dataclass(frozen=True)
class BoxPrompt:
    """Inclusive pixel bounds: the box covers rows r0..r1 and cols c0..c1."""

    r0: int
    c0: int
    r1: int
    c1: int

    def __post_init__(self) -> None:
        if self.r0 > self.r1 or self.c0 > self.c1:
            raise ValueError(f"box bounds out of order {self}")
        if min(self.r0, self.c0) < 0:
            raise ValueError(f"negative box bounds {self}")


Prompt = Union[PointPrompt, BoxPrompt]


def _prompt_in_bounds(p: Prompt, height: int, width: int) -> bool:
    if isinstance(p, PointPrompt):
        return p.row < height and p.col < width
    return p.r1 < height and p.c1 < width


@dataclass(frozen=True)
class PromptSet:
    """Append-only, ordered history of prompts issued within one episode."""

    height: int
    width: int
    prompts: tuple[Prompt, ...] = ()

    def __post_init__(self) -> None:
        for p in self.prompts:
            if not _prompt_in_bounds(p, self.height, self.width):
                raise ValueError(f"prompt {p} outside {self.height}x{self.width} grid")

    def with_prompt(self, prompt: Prompt) -> "PromptSet":
        return PromptSet(self.height, self.width, self.prompts + (prompt,))

    def has_box(self) -> bool:
        return any(isinstance(p, BoxPrompt) for p in self.prompts)

    def __len__(self) -> int:
        return len(self.prompts)

    def __iter__(self) -> Iterator[Prompt]:
        return iter(self.prompts)

    def __bool__(self) -> bool:
        return bool(self.prompts)


@dataclass(frozen=True, eq=False)
class Case:
    """One episode's worth of data: image, ground truth, determinism seed."""

    id: str
    image: Grid2D
    truth: BinaryMask
    seed: int

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("case id must be non-empty")
        if self.image.shape != self.truth.shape:
            raise ValueError(
                f"image {self.image.shape} and truth {self.truth.shape} differ"
            )
        if self.truth.count() < 1:
            raise ValueError(f"case {self.id}: ground truth has no foreground")
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"case {self.id}: seed must be a 64-bit unsigned int")

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


def clip_box(r0: int, c0: int, r1: int, c1: int, height: int, width: int) -> BoxPrompt:
    """Reorder bounds if needed, then clamp them into the grid."""
    r0, r1 = min(r0, r1), max(r0, r1)
    c0, c1 = min(c0, c1), max(c0, c1)
    return BoxPrompt(
        max(0, min(r0, height - 1)),
        max(0, min(c0, width - 1)),
        max(0, min(r1, height - 1)),
        max(0, min(c1, width - 1)),
    )


def paint_disk(target: np.ndarray, row: int, col: int, radius: int) -> None:
    """Set to 1 every in-grid pixel with squared distance <= radius**2."""
    h, w = target.shape
    r_lo, r_hi = max(0, row - radius), min(h, row + radius + 1)
    c_lo, c_hi = max(0, col - radius), min(w, col + radius + 1)
    rr = np.arange(r_lo, r_hi)[:, None] - row
    cc = np.arange(c_lo, c_hi)[None, :] - col
    target[r_lo:r_hi, c_lo:c_hi][rr * rr + cc * cc <= radius * radius] = 1


def paint_box(target: np.ndarray, box: BoxPrompt) -> None:
    target[box.r0 : box.r1 + 1, box.c0 : box.c1 + 1] = 1
