# structure_tracker/core_model.py
"""
Geometry and identity primitives shared by all tracker modules.
Coordinates are image pixels, top-left origin, y pointing down (MOTChallenge convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np


@dataclass(frozen=True, slots=True)
class Point2:
    """A finite image-plane location."""
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 must be finite, got ({self.x}, {self.y})")

    def translated(self, dx: float, dy: float) -> Point2:
        return Point2(self.x + dx, self.y + dy)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> Point2:
        x, y = values
        return cls(float(x), float(y))


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in MOTChallenge (left, top, width, height) layout."""
    left: float
    top: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"BBox needs positive size, got {self.width}x{self.height}")
        if not all(math.isfinite(v) for v in (self.left, self.top, self.width, self.height)):
            raise ValueError("BBox values must be finite")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point2:
        return bbox_center(self)

    def translated(self, dx: float, dy: float) -> BBox:
        return BBox(self.left + dx, self.top + dy, self.width, self.height)

    def recentered(self, center: Point2) -> BBox:
        """Same size, moved so its center sits on `center`."""
        return BBox(center.x - self.width / 2.0, center.y - self.height / 2.0, self.width, self.height)

    def clipped(self, image_width: float, image_height: float) -> Optional[BBox]:
        """Intersection with the image rectangle, or None if nothing is left."""
        left = max(self.left, 0.0)
        top = max(self.top, 0.0)
        right = min(self.right, float(image_width))
        bottom = min(self.bottom, float(image_height))
        if right <= left or bottom <= top:
            return None
        return BBox(left, top, right - left, bottom - top)


@dataclass(frozen=True, slots=True)
class Detection:
    """A single detector observation d_i^t, before any identity is attached."""
    frame: int
    bbox: BBox
    confidence: float
    detection_id: int = 0

    def __post_init__(self) -> None:
        if self.frame < 1:
            raise ValueError(f"frame index must be >= 1, got {self.frame}")
        if not math.isfinite(self.confidence):
            raise ValueError("detection confidence must be finite")

    @property
    def center(self) -> Point2:
        return bbox_center(self.bbox)


@dataclass(frozen=True, slots=True)
class TrackState:
    """State of one identified target at one frame, observed (matched) or predicted."""
    track_id: int
    center: Point2
    bbox: BBox
    frame: int
    matched: bool


@dataclass
class Trajectory:
    """Time-ordered state history of one identity plus its miss counter."""
    track_id: int
    states: List[TrackState] = field(default_factory=list)
    miss_count: int = 0

    def append(self, state: TrackState) -> None:
        if state.track_id != self.track_id:
            raise ValueError(f"state for track {state.track_id} appended to track {self.track_id}")
        if self.states and state.frame <= self.states[-1].frame:
            raise ValueError(
                f"track {self.track_id}: frame {state.frame} does not follow {self.states[-1].frame}"
            )
        self.states.append(state)
        self.miss_count = 0 if state.matched else self.miss_count + 1

    @property
    def last_state(self) -> TrackState:
        if not self.states:
            raise ValueError(f"track {self.track_id} has no states")
        return self.states[-1]

    @property
    def last_observed(self) -> Optional[TrackState]:
        for state in reversed(self.states):
            if state.matched:
                return state
        return None

    @property
    def last_frame(self) -> int:
        return self.last_state.frame

    def trailing_predicted(self) -> List[TrackState]:
        """Predicted states after the most recent observation."""
        if self.miss_count == 0:
            return []
        return list(self.states[-self.miss_count:])

    def centers(self, last: Optional[int] = None) -> np.ndarray:
        """(n, 2) array of state centers, optionally only the last `last` ones."""
        states = self.states if last is None else self.states[-last:]
        if not states:
            return np.zeros((0, 2), dtype=float)
        return np.array([[s.center.x, s.center.y] for s in states], dtype=float)


def bbox_center(b: BBox) -> Point2:
    """Center location (left + width/2, top + height/2)."""
    return Point2(b.left + b.width / 2.0, b.top + b.height / 2.0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter_w = min(a.right, b.right) - max(a.left, b.left)
    inter_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return float(min(1.0, max(0.0, inter / union)))


def euclidean_distance(a: Point2, b: Point2) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def iou_matrix(boxes_a: List[BBox], boxes_b: List[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(boxes_a), len(boxes_b))."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)), dtype=float)
    a = np.array([[b.left, b.top, b.right, b.bottom] for b in boxes_a], dtype=float)
    b = np.array([[x.left, x.top, x.right, x.bottom] for x in boxes_b], dtype=float)
    inter_w = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    inter_h = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = inter_w * inter_h
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def centers_array(points: Iterable[Point2]) -> np.ndarray:
    """(n, 2) float array from Point2 values."""
    rows = [[p.x, p.y] for p in points]
    if not rows:
        return np.zeros((0, 2), dtype=float)
    return np.array(rows, dtype=float)
