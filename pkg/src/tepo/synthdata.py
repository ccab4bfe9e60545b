"""Synthetic case family and the on-disk dataset format.

A case's ground truth is a union of random rotated ellipses regenerated until
it clears the minimum-foreground filter; the image is truth-correlated
intensity (foreground around 0.7, background around 0.3) plus seeded noise.
Datasets are stored as binary PGM pairs (`<id>_img.pgm`, `<id>_msk.pgm`) plus
a `manifest.json`; the same layout is consumed when an external bridge exports
real slices.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .grid import BinaryMask, Case, Grid2D
from .hashing import fnv1a64, splitmix64

MANIFEST_NAME = "manifest.json"
DATASET_FORMAT = "tepo-dataset"
DATASET_VERSION = 1

_MAX_ATTEMPTS = 100


class DatasetError(Exception):
    """Generation failure or unreadable/inconsistent dataset directory."""


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    blobs_min: int = 1
    blobs_max: int = 3
    blob_radius_min: float = 5.0
    blob_radius_max: float = 16.0
    min_foreground: int = 64
    noise_std: float = 0.05
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.height < 8 or self.width < 8:
            raise ValueError("grid sides must be >= 8")
        if not 1 <= self.blobs_min <= self.blobs_max:
            raise ValueError("need 1 <= blobs_min <= blobs_max")
        if not 1.0 <= self.blob_radius_min <= self.blob_radius_max:
            raise ValueError("need 1 <= blob_radius_min <= blob_radius_max")
        if self.min_foreground < 1:
            raise ValueError("min_foreground must be >= 1")
        if self.min_foreground > self.height * self.width // 4:
            raise ValueError("min_foreground must be <= H*W/4")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def _ellipse_union(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    h, w = cfg.height, cfg.width
    truth = np.zeros((h, w), dtype=bool)
    rr, cc = np.mgrid[0:h, 0:w]
    n_blobs = int(rng.integers(cfg.blobs_min, cfg.blobs_max + 1))
    for _ in range(n_blobs):
        cy = rng.uniform(0.15 * h, 0.85 * h)
        cx = rng.uniform(0.15 * w, 0.85 * w)
        a = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max)
        b = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max)
        theta = rng.uniform(0.0, np.pi)
        dy, dx = rr - cy, cc - cx
        u = dy * np.cos(theta) + dx * np.sin(theta)
        v = -dy * np.sin(theta) + dx * np.cos(theta)
        truth |= (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return truth


def case_seed(master_seed: int, index: int) -> int:
    return splitmix64(splitmix64(master_seed & ((1 << 64) - 1)) ^ (index & ((1 << 64) - 1)))


def generate_case(cfg: SynthConfig, index: int) -> Case:
    """Deterministic function of (cfg.master_seed, index)."""
    truth = None
    for attempt in range(_MAX_ATTEMPTS):
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.master_seed, index, attempt])
        )
        candidate = _ellipse_union(rng, cfg)
        if int(candidate.sum()) >= cfg.min_foreground:
            truth = candidate
            break
    if truth is None:
        raise DatasetError(
            f"case {index}: no mask met min_foreground={cfg.min_foreground} "
            f"after {_MAX_ATTEMPTS} attempts"
        )
    image = 0.3 + 0.4 * truth + rng.normal(0.0, cfg.noise_std, truth.shape)
    image = np.clip(image, 0.0, 1.0)
    return Case(
        id=f"c{index:05d}",
        image=Grid2D(image),
        truth=BinaryMask(truth),
        seed=case_seed(cfg.master_seed, index),
    )


def generate_dataset(cfg: SynthConfig, count: int) -> list[Case]:
    return [generate_case(cfg, i) for i in range(count)]


def write_pgm(path: Path, data: np.ndarray) -> None:
    """Binary (P5) PGM with maxval 255."""
    arr = np.asarray(data, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM data must be 2-D")
    h, w = arr.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise DatasetError(f"{path.name}: not a binary PGM file")
    # header: magic + width + height + maxval, whitespace separated,
    # '#' comments allowed between tokens
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise DatasetError(f"{path.name}: malformed PGM header")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise DatasetError(f"{path.name}: unsupported PGM maxval {maxval}")
    raster = raw[pos:]
    if len(raster) != h * w:
        raise DatasetError(
            f"{path.name}: raster is {len(raster)} bytes, header says {h * w}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def _img_name(case_id: str) -> str:
    return f"{case_id}_img.pgm"


def _msk_name(case_id: str) -> str:
    return f"{case_id}_msk.pgm"


def write_dataset(directory: str | Path, cases: Sequence[Case],
                  generator: Optional[SynthConfig] = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = [c.id for c in cases]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate case ids")
    entries = []
    for case in sorted(cases, key=lambda c: c.id):
        img = np.rint(np.clip(case.image.data, 0.0, 1.0) * 255.0).astype(np.uint8)
        msk = case.truth.data * np.uint8(255)
        write_pgm(directory / _img_name(case.id), img)
        write_pgm(directory / _msk_name(case.id), msk)
        entries.append(
            {"id": case.id, "height": case.image.height,
             "width": case.image.width, "seed": case.seed}
        )
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "cases": entries,
        "generator": asdict(generator) if generator is not None else None,
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_dataset(directory: str | Path) -> list[Case]:
    """Exact inverse of write_dataset up to 8-bit image quantization."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"{directory}: missing {MANIFEST_NAME}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{directory}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DatasetError(f"{directory}: not a {DATASET_FORMAT} directory")
    cases = []
    for entry in manifest.get("cases", []):
        case_id = entry["id"]
        img_path = directory / _img_name(case_id)
        msk_path = directory / _msk_name(case_id)
        for p in (img_path, msk_path):
            if not p.is_file():
                raise DatasetError(f"case {case_id}: missing file {p.name}")
        img = read_pgm(img_path)
        msk = read_pgm(msk_path)
        if img.shape != (entry["height"], entry["width"]):
            raise DatasetError(
                f"case {case_id}: image shape {img.shape} does not match manifest"
            )
        if img.shape != msk.shape:
            raise DatasetError(f"case {case_id}: image/mask shape mismatch")
        bad = set(np.unique(msk)) - {0, 255}
        if bad:
            raise DatasetError(
                f"case {case_id}: mask contains values other than 0/255: {sorted(bad)}"
            )
        cases.append(
            Case(
                id=case_id,
                image=Grid2D(img.astype(np.float64) / 255.0),
                truth=BinaryMask(msk > 0),
                seed=int(entry["seed"]),
            )
        )
    return cases


SPLIT_NAMES = ("train", "val", "test")


def split_bucket(case_id: str) -> int:
    """Stable 0..99 bucket from the case id alone."""
    return splitmix64(fnv1a64(case_id.encode("utf-8"))) % 100


def split_dataset(
    cases: Sequence[Case], ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> dict[str, list[Case]]:
    """Deterministic train/val/test split by case-id hash."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    t_end = 100.0 * ratios[0]
    v_end = 100.0 * (ratios[0] + ratios[1])
    out: dict[str, list[Case]] = {name: [] for name in SPLIT_NAMES}
    for case in sorted(cases, key=lambda c: c.id):
        b = split_bucket(case.id)
        if b < t_end:
            out["train"].append(case)
        elif b < v_end:
            out["val"].append(case)
        else:
            out["test"].append(case)
    return out
