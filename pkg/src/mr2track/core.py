"""Shared geometry and value types.

All boxes are axis-aligned corner pairs. Internally every box lives in the
normalized frame ``[0, 1]^2`` so that detections coming from different input
resolutions can be compared directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NewType

ClassId = NewType("ClassId", int)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box ``(x_min, y_min, x_max, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x_min, self.y_min, self.x_max, self.y_max

    def clamp(self) -> BBox:
        """Return the box clipped to the unit square."""
        c = [min(max(v, 0.0), 1.0) for v in self.as_tuple()]
        return BBox(*c)

    def scale(self, sx: float, sy: float) -> BBox:
        return BBox(self.x_min * sx, self.y_min * sy, self.x_max * sx, self.y_max * sy)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


class Tier(str, enum.Enum):
    FULL = "full"
    LOW = "low"


@dataclass(frozen=True)
class ResolutionTier:
    """One detector input size and its per-frame cost in MMAC."""

    name: Tier
    width_px: int
    height_px: int
    mac_cost: float = 0.0

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"tier {self.name.value} needs positive dimensions")
        if self.mac_cost < 0:
            raise ValueError("mac_cost must be non-negative")


@dataclass(frozen=True)
class Detection:
    """A single detector output.

    ``normalized`` is False only for boxes still in the pixel units of the
    producing tier; :func:`rescale_detection` converts them.
    """

    bbox: BBox
    cls: int
    conf: float
    frame_index: int = 0
    tier: Tier = Tier.FULL
    normalized: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.conf < 1.0:
            raise ValueError(f"confidence must lie in [0, 1), got {self.conf}")
        if self.cls < 0:
            raise ValueError(f"negative class id {self.cls}")
        if self.frame_index < 0:
            raise ValueError(f"negative frame index {self.frame_index}")


def rescale_detection(d: Detection, from_tier: ResolutionTier) -> Detection:
    """Bring ``d`` into the normalized frame; a no-op for normalized input."""
    if from_tier.width_px <= 0 or from_tier.height_px <= 0:
        raise ValueError("tier dimensions must be positive")
    if d.normalized:
        return d
    box = d.bbox.scale(1.0 / from_tier.width_px, 1.0 / from_tier.height_px).clamp()
    return replace(d, bbox=box, normalized=True)


@dataclass(frozen=True)
class TrackerConfig:
    low_threshold: float = 0.3
    high_threshold: float = 0.35
    iou_match_threshold: float = 0.3
    activation_hits: int = 2
    max_coast_frames: int = 5
    epsilon: float = 0.01
    class_count: int = 80
    # Rescore plus the high-score class/conf refresh; off reproduces
    # the original ByteTrack behaviour (class and conf frozen at birth).
    rescore: bool = True
    # False skips matching entirely: every detection starts a fresh track.
    associate: bool = True
    emit_coasting: bool = False

    def __post_init__(self) -> None:
        for name in ("low_threshold", "high_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.low_threshold > self.high_threshold:
            raise ValueError("low_threshold must not exceed high_threshold")
        if not 0.0 <= self.iou_match_threshold <= 1.0:
            raise ValueError("iou_match_threshold must lie in [0, 1]")
        if self.activation_hits < 1:
            raise ValueError("activation_hits must be positive")
        if self.max_coast_frames < 0:
            raise ValueError("max_coast_frames must be non-negative")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
