"""Raster primitives shared by every other module.

Conventions (fixed project-wide):
  * raster origin is top-left, row-major (row, col) addressing;
  * disk membership is inclusive: Euclidean distance <= radius;
  * binarize is threshold-inclusive (p >= t -> 1);
  * iou(empty, empty) = 1.0 (an absent object correctly predicted absent);
  * masks serialize as COCO-style uncompressed RLE: column-major scan,
    alternating run lengths starting with a background run (leading 0
    when pixel (0,0) is foreground).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

DEFAULT_CLICK_RADIUS = 5

POSITIVE = "positive"
NEGATIVE = "negative"


class GeometryError(ValueError):
    """Raised on shape/range violations of the raster contracts."""


@dataclass(frozen=True, order=True)
class Click:
    row: int
    col: int
    polarity: str
    order: int = 0

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise GeometryError(f"bad polarity {self.polarity!r}")
        if self.row < 0 or self.col < 0:
            raise GeometryError(f"negative click position ({self.row},{self.col})")

    @property
    def is_positive(self) -> bool:
        return self.polarity == POSITIVE

    def to_json(self) -> dict:
        return {
            "row": int(self.row),
            "col": int(self.col),
            "polarity": self.polarity,
            "order": int(self.order),
        }

    @staticmethod
    def from_json(d: dict) -> "Click":
        return Click(int(d["row"]), int(d["col"]), d["polarity"], int(d["order"]))


class ClickSet:
    """An ordered, immutable collection of clicks with contiguous orders."""

    def __init__(self, clicks: Iterable[Click] = ()):
        clicks = tuple(sorted(clicks, key=lambda c: c.order))
        orders = [c.order for c in clicks]
        if orders != list(range(len(clicks))):
            raise GeometryError(f"click orders not contiguous from 0: {orders}")
        self._clicks = clicks

    def __iter__(self):
        return iter(self._clicks)

    def __len__(self):
        return len(self._clicks)

    def __getitem__(self, i):
        return self._clicks[i]

    def __eq__(self, other):
        return isinstance(other, ClickSet) and self._clicks == other._clicks

    def __repr__(self):
        return f"ClickSet({list(self._clicks)!r})"

    @property
    def positives(self) -> tuple[Click, ...]:
        return tuple(c for c in self._clicks if c.is_positive)

    @property
    def negatives(self) -> tuple[Click, ...]:
        return tuple(c for c in self._clicks if not c.is_positive)

    def appended(self, row: int, col: int, polarity: str) -> "ClickSet":
        return ClickSet(self._clicks + (Click(row, col, polarity, len(self)),))

    def without_last(self) -> "ClickSet":
        if not self._clicks:
            raise GeometryError("cannot pop from an empty ClickSet")
        return ClickSet(self._clicks[:-1])

    def to_json(self) -> list[dict]:
        return [c.to_json() for c in self._clicks]

    @staticmethod
    def from_json(items: Sequence[dict]) -> "ClickSet":
        return ClickSet(Click.from_json(d) for d in items)

    @staticmethod
    def from_points(points: Iterable[tuple[int, int, str]]) -> "ClickSet":
        return ClickSet(
            Click(r, c, pol, i) for i, (r, c, pol) in enumerate(points)
        )


def validate_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise GeometryError(f"image must be HxWx3, got {image.shape}")
    if image.shape[0] < 16 or image.shape[1] < 16:
        raise GeometryError(f"image too small: {image.shape[:2]}")
    if not np.isfinite(image).all():
        raise GeometryError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise GeometryError("image values outside [0,1]")
    return image


def validate_mask(mask: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise GeometryError(f"mask must be 2-D, got shape {mask.shape}")
    if shape is not None and mask.shape != tuple(shape):
        raise GeometryError(f"mask shape {mask.shape} != expected {tuple(shape)}")
    return mask.astype(bool)


def encode_clicks(
    clicks: ClickSet,
    shape: tuple[int, int],
    radius: int = DEFAULT_CLICK_RADIUS,
) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize clicks into (pos_map, neg_map) disk maps of the given shape."""
    h, w = shape
    if radius < 1:
        raise GeometryError(f"radius must be >= 1, got {radius}")
    for c in clicks:
        if not (0 <= c.row < h and 0 <= c.col < w):
            raise GeometryError(f"click out of bounds for {shape}: {c}")
    pos = clicks.positives
    neg = clicks.negatives
    pos_map = _kernels.disk_map(
        [c.row for c in pos], [c.col for c in pos], h, w, radius
    )
    neg_map = _kernels.disk_map(
        [c.row for c in neg], [c.col for c in neg], h, w, radius
    )
    return pos_map.astype(np.float32), neg_map.astype(np.float32)


def compose_guidance(
    pos_map: np.ndarray, neg_map: np.ndarray, prev_mask: np.ndarray
) -> np.ndarray:
    """Stack (pos, neg, prev) as channels 0/1/2 of an HxWx3 float array."""
    pos_map = np.asarray(pos_map, dtype=np.float32)
    neg_map = np.asarray(neg_map, dtype=np.float32)
    prev_mask = np.asarray(prev_mask, dtype=np.float32)
    if not (pos_map.shape == neg_map.shape == prev_mask.shape):
        raise GeometryError(
            f"guidance shape mismatch: {pos_map.shape}, {neg_map.shape}, "
            f"{prev_mask.shape}"
        )
    return np.stack([pos_map, neg_map, prev_mask], axis=-1)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a = validate_mask(a)
    b = validate_mask(b, a.shape)
    inter, union = _kernels.mask_intersection_union(
        a.astype(np.uint8), b.astype(np.uint8)
    )
    if union == 0:
        return 1.0
    return inter / union


def binarize(p: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if not (0.0 < threshold < 1.0):
        raise GeometryError(f"threshold must be in (0,1), got {threshold}")
    p = np.asarray(p)
    if p.ndim != 2:
        raise GeometryError(f"probability map must be 2-D, got {p.shape}")
    return p >= threshold


def rle_encode(mask: np.ndarray) -> dict:
    """Encode a binary mask as {'size': [h, w], 'counts': [...]}."""
    mask = validate_mask(mask)
    counts = _kernels.rle_encode(mask.astype(np.uint8))
    return {"size": [int(mask.shape[0]), int(mask.shape[1])],
            "counts": [int(v) for v in counts]}


def rle_decode(rle: dict) -> np.ndarray:
    h, w = (int(v) for v in rle["size"])
    return _kernels.rle_decode(
        np.asarray(rle["counts"], dtype=np.int64), h, w
    ).astype(bool)
