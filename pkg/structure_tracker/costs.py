# structure_tracker/costs.py
"""
Raw pairwise association costs (C_init): a velocity autoregressive motion model
plus HSV color-histogram appearance, coupled by configurable weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Sequence, Tuple

import cv2
import numpy as np
from pydantic import BaseModel, Field, PositiveFloat, model_validator
from scipy import linalg

from structure_tracker.core_model import BBox, Detection, Point2, Trajectory, euclidean_distance
from structure_tracker.errors import AppearanceUnavailable
from structure_tracker.motchallenge_io import FrameImage

log = logging.getLogger(__name__)

# OpenCV stores 8-bit hue in [0, 180)
HSV_RANGES = [0, 180, 0, 256, 0, 256]

# roots on the unit circle (pure oscillation) still count as stable
STABILITY_TOLERANCE = 1e-6


class CostWeights(BaseModel):
    """Mixing weights and motion model settings for C_init."""
    lambda_motion: float = Field(0.5, ge=0.0, description="Weight of the normalized motion cost.")
    lambda_appearance: float = Field(0.5, ge=0.0, description="Weight of the Bhattacharyya appearance cost.")
    motion_scale: Optional[PositiveFloat] = Field(
        None, description="Pixels mapped to motion cost 1.0; None resolves to image diagonal * motion_scale_fraction."
    )
    motion_scale_fraction: PositiveFloat = 0.1
    ar_order: int = Field(2, ge=1, description="Order k of the velocity AR model.")
    history_window: int = Field(10, ge=2, description="Velocities W_h used by the AR fit.")
    histogram_bins: Tuple[int, int, int] = (8, 8, 4)

    @model_validator(mode="after")
    def _check(self) -> CostWeights:
        if self.lambda_motion + self.lambda_appearance <= 0:
            raise ValueError("lambda_motion + lambda_appearance must be > 0")
        if self.history_window < self.ar_order + 1:
            raise ValueError("history_window must be >= ar_order + 1")
        if any(b < 1 for b in self.histogram_bins):
            raise ValueError("histogram bins must be positive")
        return self

    def resolved(self, image_size: Tuple[float, float]) -> CostWeights:
        if self.motion_scale is not None:
            return self
        diagonal = math.hypot(*image_size)
        return self.model_copy(update={"motion_scale": diagonal * self.motion_scale_fraction})

    @property
    def scale(self) -> float:
        if self.motion_scale is None:
            raise ValueError("motion_scale is unresolved; call resolved(image_size) first")
        return float(self.motion_scale)


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ARMotionModel:
    """
    Per-axis velocity AR(k): v_t = sum_i a_i * v_{t-i}.

    kind is "ar" for a fitted model, "constant" for the constant-velocity fallback and
    "zero" when the trajectory has a single observation. coefficients has shape (order, 2),
    column per axis, and always holds the least-squares fit; a column of NaN marks a singular
    axis. fallback flags axes that predict with the last velocity instead of the recurrence.
    """
    order: int
    coefficients: np.ndarray
    history_window: int
    velocities: np.ndarray
    kind: Literal["ar", "constant", "zero"] = "ar"
    fallback: Tuple[bool, bool] = (False, False)

    def next_velocity(self) -> np.ndarray:
        if self.kind == "zero" or len(self.velocities) == 0:
            return np.zeros(2)
        last = self.velocities[-1]
        if self.kind == "constant":
            return last.copy()
        recent = self.velocities[::-1][: self.order]  # v_{t-1}, v_{t-2}, ...
        out = np.empty(2)
        for axis in range(2):
            coeffs = self.coefficients[:, axis]
            if self.fallback[axis] or np.isnan(coeffs).any():
                out[axis] = last[axis]
            else:
                out[axis] = float(coeffs @ recent[:, axis])
        return out


def _fit_axis(velocities: np.ndarray, order: int) -> Optional[np.ndarray]:
    """Least-squares AR coefficients for one axis, or None when the system is singular."""
    n = len(velocities)
    design = np.column_stack([velocities[order - i - 1: n - i - 1] for i in range(order)])
    target = velocities[order:]
    if np.linalg.matrix_rank(design) < order:
        return None
    normal = design.T @ design
    try:
        factor = linalg.cho_factor(normal)
    except linalg.LinAlgError:
        return None
    return linalg.cho_solve(factor, design.T @ target)


def spectral_radius(coefficients: np.ndarray) -> float:
    """Largest root magnitude of the recurrence v_t = sum_i a_i * v_{t-i}."""
    if len(coefficients) == 1:
        return abs(float(coefficients[0]))
    roots = np.linalg.eigvals(linalg.companion(np.concatenate(([1.0], -coefficients))))
    return float(np.abs(roots).max())


def observed_velocities(trajectory: Trajectory, history_window: int) -> np.ndarray:
    """
    Per-frame velocities between the last history_window+1 observed states.

    Predicted states are skipped; a step across a gap is divided by its frame count.
    """
    observed = [s for s in trajectory.states if s.matched][-(history_window + 1):]
    if len(observed) < 2:
        return np.zeros((0, 2), dtype=float)
    centers = np.array([[s.center.x, s.center.y] for s in observed], dtype=float)
    frames = np.array([s.frame for s in observed], dtype=float)
    return np.diff(centers, axis=0) / np.diff(frames)[:, None]


def fit_ar_model(trajectory: Trajectory, order: int = 2, history_window: int = 10) -> ARMotionModel:
    """
    Fit the velocity AR model over the last `history_window` observed velocities.

    Fewer than order+1 velocity samples degrade to constant velocity (AR(1), coefficient 1);
    fewer than two observations give the zero-velocity model. An axis falls back to constant
    velocity when its normal equations are singular or its recurrence is explosive, and the
    whole model does when the predicted speed exceeds the fastest observed one.
    """
    velocities = observed_velocities(trajectory, history_window)
    if len(velocities) == 0:
        return ARMotionModel(order, np.zeros((order, 2)), history_window, velocities, kind="zero")
    if len(velocities) < order + 1:
        return ARMotionModel(1, np.ones((1, 2)), history_window, velocities, kind="constant")

    coefficients = np.empty((order, 2))
    fallback = [False, False]
    for axis in range(2):
        fitted = _fit_axis(velocities[:, axis], order)
        if fitted is None:
            coefficients[:, axis] = np.nan
            fallback[axis] = True
            continue
        coefficients[:, axis] = fitted
        if spectral_radius(fitted) > 1.0 + STABILITY_TOLERANCE:
            log.debug("track %d axis %d: explosive AR fit, using constant velocity", trajectory.track_id, axis)
            fallback[axis] = True
    if all(fallback):
        return ARMotionModel(order, coefficients, history_window, velocities, kind="constant",
                             fallback=(True, True))

    model = ARMotionModel(order, coefficients, history_window, velocities, kind="ar",
                          fallback=(fallback[0], fallback[1]))
    fastest = float(np.linalg.norm(velocities, axis=1).max())
    if np.linalg.norm(model.next_velocity()) > fastest * (1.0 + STABILITY_TOLERANCE) + STABILITY_TOLERANCE:
        log.debug("track %d: AR speed exceeds observed maximum, using constant velocity", trajectory.track_id)
        return ARMotionModel(order, coefficients, history_window, velocities, kind="constant",
                             fallback=(True, True))
    return model


def predict_next_location(model: ARMotionModel, trajectory: Trajectory) -> Point2:
    """Last position plus the AR-predicted velocity."""
    last = trajectory.last_state.center
    vx, vy = model.next_velocity()
    return Point2(last.x + float(vx), last.y + float(vy))


def predict_locations(trajectories: Sequence[Trajectory], weights: CostWeights) -> list[Point2]:
    """Motion-only prediction for every trajectory, in input order."""
    return [
        predict_next_location(fit_ar_model(t, weights.ar_order, weights.history_window), t)
        for t in trajectories
    ]


def motion_cost(predicted: Point2, detection: Detection, motion_scale: float) -> float:
    return euclidean_distance(predicted, detection.center) / motion_scale


# ---------------------------------------------------------------------------
# Appearance
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AppearanceDescriptor:
    """Normalized HSV histogram (bins sum to 1)."""
    histogram: np.ndarray

    def __post_init__(self) -> None:
        if (self.histogram < 0).any():
            raise ValueError("histogram bins must be non-negative")
        if abs(float(self.histogram.sum()) - 1.0) > 1e-9:
            raise ValueError("histogram must sum to 1")


def _pixel_window(image: FrameImage, bbox: BBox) -> Tuple[int, int, int, int]:
    x0 = max(0, int(math.floor(bbox.left)))
    y0 = max(0, int(math.floor(bbox.top)))
    x1 = min(image.width, int(math.ceil(bbox.right)))
    y1 = min(image.height, int(math.ceil(bbox.bottom)))
    return x0, y0, x1, y1


def extract_descriptor(image: FrameImage, bbox: BBox, bins: Tuple[int, int, int] = (8, 8, 4)) -> AppearanceDescriptor:
    """HSV histogram over the pixels of bbox clipped to the image."""
    x0, y0, x1, y1 = _pixel_window(image, bbox)
    if x1 <= x0 or y1 <= y0:
        raise AppearanceUnavailable(f"box {bbox} has no pixels inside the {image.width}x{image.height} image")
    patch = np.ascontiguousarray(image.pixels[y0:y1, x0:x1])
    hsv = cv2.cvtColor(patch, cv2.COLOR_RGB2HSV)
    hist = cv2.calcHist([hsv], [0, 1, 2], None, list(bins), HSV_RANGES).astype(np.float64).ravel()
    total = hist.sum()
    if total <= 0:
        raise AppearanceUnavailable(f"box {bbox} produced an empty histogram")
    return AppearanceDescriptor(hist / total)


def appearance_cost(a: AppearanceDescriptor, b: AppearanceDescriptor) -> float:
    """Bhattacharyya distance 1 - sum(sqrt(a_i * b_i)), clipped to [0, 1]."""
    coefficient = float(np.sqrt(a.histogram * b.histogram).sum())
    return min(1.0, max(0.0, 1.0 - coefficient))


# ---------------------------------------------------------------------------
# Matrix
# ---------------------------------------------------------------------------
def detection_descriptors(
    detections: Sequence[Detection], frame_image: Optional[FrameImage], bins: Tuple[int, int, int]
) -> list[Optional[AppearanceDescriptor]]:
    """Descriptor per detection; None where the patch is unavailable or there is no image."""
    if frame_image is None:
        return [None] * len(detections)
    out: list[Optional[AppearanceDescriptor]] = []
    for d in detections:
        try:
            out.append(extract_descriptor(frame_image, d.bbox, bins))
        except AppearanceUnavailable as e:
            log.debug("appearance unavailable for detection %d: %s", d.detection_id, e)
            out.append(None)
    return out


def build_raw_cost_matrix(
    detections: Sequence[Detection],
    trajectories: Sequence[Trajectory],
    weights: CostWeights,
    frame_image: Optional[FrameImage] = None,
    *,
    predictions: Optional[Sequence[Point2]] = None,
    track_appearance: Optional[Dict[int, AppearanceDescriptor]] = None,
    det_appearance: Optional[Sequence[Optional[AppearanceDescriptor]]] = None,
) -> np.ndarray:
    """
    C_init with rows = detections, cols = trajectories.

    entry(i, j) = (lambda_m * motion + lambda_a * appearance) / (lambda_m + lambda_a)
    when both descriptors exist; otherwise the appearance weight is treated as 0 and the
    entry is the motion cost alone.

    Args:
        detections: detections of the current frame
        trajectories: active trajectories
        weights: resolved CostWeights (motion_scale set)
        frame_image: current frame; None runs motion-only
        predictions: precomputed motion-only predictions (fitted here when None)
        track_appearance: descriptor per track_id from the last matched detection
        det_appearance: precomputed detection descriptors (extracted from frame_image when None)
    """
    m, n = len(detections), len(trajectories)
    if m == 0 or n == 0:
        return np.zeros((m, n), dtype=float)

    if predictions is None:
        predictions = predict_locations(trajectories, weights)
    scale = weights.scale

    pred = np.array([[p.x, p.y] for p in predictions], dtype=float)
    centers = np.array([[d.center.x, d.center.y] for d in detections], dtype=float)
    motion = np.linalg.norm(centers[:, None, :] - pred[None, :, :], axis=2) / scale

    use_appearance = weights.lambda_appearance > 0 and (frame_image is not None or det_appearance is not None)
    if not use_appearance:
        return motion

    if det_appearance is None:
        det_appearance = detection_descriptors(detections, frame_image, weights.histogram_bins)
    track_appearance = track_appearance or {}

    total = weights.lambda_motion + weights.lambda_appearance
    w_motion = weights.lambda_motion / total
    w_appearance = weights.lambda_appearance / total

    costs = motion.copy()
    for j, trajectory in enumerate(trajectories):
        track_desc = track_appearance.get(trajectory.track_id)
        if track_desc is None:
            continue
        for i, det_desc in enumerate(det_appearance):
            if det_desc is None:
                continue
            costs[i, j] = w_motion * motion[i, j] + w_appearance * appearance_cost(det_desc, track_desc)
    return costs
