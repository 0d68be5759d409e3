# structure_tracker/recovery.py
"""
Missing-target recovery and track lifecycle.

A trajectory with no detection this frame is placed by minimizing

    sum over all identities of ||dT_i(t) - dT_i(t-1)||^2  +  sum over missing of ||T_j - T~_j||^2

where dT are positions relative to the mean of the same identity set at each frame and
T~ is the motion-only prediction. The objective is a convex quadratic in the missing
positions; it separates by axis and is solved through its normal equations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import linalg

from structure_tracker.assignment import AssignmentResult
from structure_tracker.core_model import Detection, Point2, TrackState, Trajectory

log = logging.getLogger(__name__)


class RecoveryConfig(BaseModel):
    window: int = Field(10, ge=1, description="Frames a trajectory may go unmatched before it is terminated.")
    tolerance: float = Field(1e-8, gt=0.0, description="Relative residual above which the solve is reported.")
    enabled: bool = Field(True, description="False keeps the motion-only prediction and reports no reacquired gaps.")


@dataclass(frozen=True)
class MissingTarget:
    track_id: int
    motion_prediction: Point2
    previous: Point2
    age: int

    def __post_init__(self) -> None:
        if self.age < 1:
            raise ValueError(f"missing target {self.track_id}: age must be >= 1, got {self.age}")


def _system(matched: Sequence[Tuple[Point2, Point2]], missing: Sequence[MissingTarget]):
    """
    Per-axis data for the normal equations. Identities are ordered matched first,
    then missing; u = a + S x is the displacement from t-1 to t of every identity.
    """
    n_matched, n_missing = len(matched), len(missing)
    total = n_matched + n_missing
    a = np.zeros((total, 2))
    for i, (now, before) in enumerate(matched):
        a[i] = (now.x - before.x, now.y - before.y)
    for j, target in enumerate(missing):
        a[n_matched + j] = (-target.previous.x, -target.previous.y)
    select = np.zeros((total, n_missing))
    select[n_matched:, :] = np.eye(n_missing)
    centering = np.eye(total) - np.full((total, total), 1.0 / total)
    return a, select, centering


def predict_missing_targets(
    matched: Sequence[Tuple[Point2, Point2]],
    missing: Sequence[MissingTarget],
    cfg: Optional[RecoveryConfig] = None,
) -> List[Point2]:
    """
    Args:
        matched: (position at t, position at t-1) for each associated trajectory
        missing: trajectories without a detection at t
        cfg: recovery settings; only the solver tolerance is used here

    Returns:
        Recovered position at t for each missing target, in input order.
    """
    cfg = cfg or RecoveryConfig()
    if not missing:
        return []

    a, select, centering = _system(matched, missing)
    prior = np.array([[t.motion_prediction.x, t.motion_prediction.y] for t in missing])

    # (S'HS + I) x = x~ - S'Ha, shared by both axes
    normal = select.T @ centering @ select + np.eye(len(missing))
    rhs = prior - select.T @ centering @ a
    solution = linalg.cho_solve(linalg.cho_factor(normal), rhs)

    residual = float(np.linalg.norm(normal @ solution - rhs))
    scale = max(1.0, float(np.linalg.norm(rhs)))
    if residual > cfg.tolerance * scale:
        log.warning("recovery solve residual %.3e exceeds tolerance %.1e", residual, cfg.tolerance)

    return [Point2(float(x), float(y)) for x, y in solution]


def recovery_objective(
    matched: Sequence[Tuple[Point2, Point2]],
    missing: Sequence[MissingTarget],
    positions: Sequence[Point2] | np.ndarray,
) -> float:
    """Value of the joint structure and motion objective at candidate missing positions."""
    if not missing:
        return 0.0
    a, select, centering = _system(matched, missing)
    x = np.asarray([[p.x, p.y] for p in positions] if not isinstance(positions, np.ndarray) else positions,
                   dtype=float).reshape(-1, 2)
    prior = np.array([[t.motion_prediction.x, t.motion_prediction.y] for t in missing])
    structure = centering @ (a + select @ x)
    return float(np.sum(structure ** 2) + np.sum((x - prior) ** 2))


# ---------------------------------------------------------------------------
# Lifecycle
# ---------------------------------------------------------------------------
@dataclass
class LifecycleResult:
    """
    active: trajectories alive after this frame, continuing ones first then new ones
    emitted: observed states of this frame, one per matched or new trajectory
    reacquired: predicted gap states of trajectories matched again this frame, by track_id
    """
    active: List[Trajectory] = field(default_factory=list)
    spawned: List[Trajectory] = field(default_factory=list)
    terminated: List[Trajectory] = field(default_factory=list)
    emitted: List[TrackState] = field(default_factory=list)
    reacquired: Dict[int, List[TrackState]] = field(default_factory=dict)
    next_track_id: int = 1


def _observed(track_id: int, detection: Detection) -> TrackState:
    return TrackState(track_id, detection.center, detection.bbox, detection.frame, matched=True)


def step_lifecycle(
    trajectories: Sequence[Trajectory],
    assignment: AssignmentResult,
    detections: Sequence[Detection],
    cfg: RecoveryConfig,
    *,
    frame: int,
    next_track_id: int,
    predicted: Optional[Mapping[int, Point2]] = None,
) -> LifecycleResult:
    """
    Apply one frame's assignment to the trajectories.

    Matched trajectories gain an observed state. Unmatched ones gain a predicted state
    (from `predicted`, keyed by track_id) unless that pushes miss_count past the
    window, in which case they are terminated. Unmatched detections start new tracks.
    """
    predicted = predicted or {}
    det_for_track = {j: i for i, j in assignment.matches}
    result = LifecycleResult(next_track_id=next_track_id)

    for j, trajectory in enumerate(trajectories):
        if j in det_for_track:
            gap = trajectory.trailing_predicted()
            state = _observed(trajectory.track_id, detections[det_for_track[j]])
            trajectory.append(state)
            if gap and cfg.enabled:
                result.reacquired[trajectory.track_id] = gap
            result.emitted.append(state)
            result.active.append(trajectory)
            continue

        if trajectory.miss_count + 1 > cfg.window:
            result.terminated.append(trajectory)
            log.debug("track %d terminated at frame %d after %d misses",
                      trajectory.track_id, frame, trajectory.miss_count + 1)
            continue

        last = trajectory.last_state
        center = predicted.get(trajectory.track_id)
        if center is None:
            center = last.center
        trajectory.append(TrackState(trajectory.track_id, center, last.bbox.recentered(center), frame, matched=False))
        result.active.append(trajectory)

    matched_rows = set(det_for_track.values())
    for i, detection in enumerate(detections):
        if i in matched_rows:
            continue
        track = Trajectory(result.next_track_id)
        state = _observed(track.track_id, detection)
        track.append(state)
        result.next_track_id += 1
        result.spawned.append(track)
        result.active.append(track)
        result.emitted.append(state)

    result.emitted.sort(key=lambda s: (s.frame, s.track_id))
    return result
