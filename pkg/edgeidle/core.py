"""Geometry and identity primitives shared by every other module."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NewType

import numpy as np

from edgeidle.errors import ValidationError

TrackId = NewType("TrackId", int)


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box: top-left corner (x, y), width w and height h, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        try:
            for name in ("x", "y", "w", "h"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError):
            raise ValidationError(f"BBox fields must be numbers: {self!r}") from None
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValidationError(f"BBox fields must be finite: {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"BBox width and height must be positive: {self!r}")

    @classmethod
    def from_xyah(cls, cx: float, cy: float, aspect: float, height: float) -> BBox:
        w = aspect * height
        return cls(cx - w / 2, cy - height / 2, w, height)

    def to_tlwh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def to_xyah(self) -> np.ndarray:
        return np.array([self.x + self.w / 2, self.y + self.h / 2, self.w / self.h, self.h])

    def translated(self, dx: float, dy: float) -> BBox:
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def clipped(self, width: float, height: float) -> BBox | None:
        """Clip to the frame [0, width] x [0, height]; None if less than a pixel remains."""
        x1, y1 = max(self.x, 0.0), max(self.y, 0.0)
        x2, y2 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x2 - x1 < 1.0 or y2 - y1 < 1.0:
            return None
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def inside(self, width: float, height: float) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True, slots=True)
class ClassLabel:
    id: int
    name: str

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"Class id must be non-negative, got {self.id}")
        if not self.name:
            raise ValidationError("Class name must be non-empty")


EXCAVATOR = ClassLabel(0, "excavator")
DUMP_TRUCK = ClassLabel(1, "dump_truck")
CEMENT_MIXER_TRUCK = ClassLabel(2, "cement_mixer_truck")
DEFAULT_CLASSES = (EXCAVATOR, DUMP_TRUCK, CEMENT_MIXER_TRUCK)


class ClassRegistry:
    """Maps wire-level class ids to labels; unknown ids get a generated name."""

    def __init__(self, labels: Iterable[ClassLabel] = DEFAULT_CLASSES):
        self._by_id: dict[int, ClassLabel] = {}
        for label in labels:
            if label.id in self._by_id:
                raise ValidationError(f"Duplicate class id {label.id}")
            self._by_id[label.id] = label

    def resolve(self, class_id: int) -> ClassLabel:
        label = self._by_id.get(class_id)
        if label is None:
            label = ClassLabel(class_id, f"class_{class_id}")
            self._by_id[class_id] = label
        return label

    def lookup(self, key: int | str) -> ClassLabel:
        """Resolve a class by id or by name; unknown names are rejected."""
        if isinstance(key, bool):
            raise ValidationError(f"Invalid class {key!r}")
        if isinstance(key, int):
            return self.resolve(key)
        for label in self._by_id.values():
            if label.name == key:
                return label
        raise ValidationError(f"Unknown class name {key!r}")

    def labels(self) -> list[ClassLabel]:
        return sorted(self._by_id.values(), key=lambda c: c.id)


@dataclass(frozen=True, slots=True)
class Detection:
    frame_index: int
    bbox: BBox
    confidence: float
    cls: ClassLabel

    def __post_init__(self):
        object.__setattr__(self, "confidence", float(self.confidence))
        if self.frame_index < 0:
            raise ValidationError(f"frame_index must be non-negative, got {self.frame_index}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence must be in [0, 1], got {self.confidence}")


def bbox_area(b: BBox) -> float:
    return b.w * b.h


def bbox_centroid(b: BBox) -> tuple[float, float]:
    return (b.x + b.w / 2, b.y + b.h / 2)


def bbox_iou(a: BBox, b: BBox) -> float:
    if a == b:
        return 1.0
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # Areas from the same corner arithmetic as the intersection.
    union = (ax2 - a.x) * (ay2 - a.y) + (bx2 - b.x) * (by2 - b.y) - inter
    return min(1.0, max(0.0, inter / union))


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    arr = np.array([b.to_tlwh() for b in boxes], dtype=float)
    return arr.reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) tlwh arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    a1, a2 = a[:, None, :2], a[:, None, :2] + a[:, None, 2:]
    b1, b2 = b[None, :, :2], b[None, :, :2] + b[None, :, 2:]
    wh = np.clip(np.minimum(a2, b2) - np.maximum(a1, b1), 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.prod(a2 - a1, axis=-1)
    area_b = np.prod(b2 - b1, axis=-1)
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)
