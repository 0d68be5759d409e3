# structure_tracker/tracker.py
"""
Online tracker: per-frame orchestration of
costs -> structural modification -> gated assignment -> recovery -> lifecycle.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from structure_tracker.assignment import AssignmentResult, GateConfig, solve_gated_assignment
from structure_tracker.core_model import Detection, Point2, TrackState, Trajectory, centers_array
from structure_tracker.costs import (
    AppearanceDescriptor,
    CostWeights,
    build_raw_cost_matrix,
    detection_descriptors,
    predict_locations,
)
from structure_tracker.errors import AppearanceUnavailable, FrameOrderError
from structure_tracker.motchallenge_io import FrameImage, ResultRecord, SequenceSource, load_frame, parse_det_file
from structure_tracker.recovery import MissingTarget, RecoveryConfig, predict_missing_targets, step_lifecycle
from structure_tracker.structural import StructuralConfig, match_sets_for_gated_pairs, modify_cost_matrix

log = logging.getLogger(__name__)

STAGES = ("costs", "structural", "assignment", "recovery", "lifecycle")
FALLBACK_IMAGE_SIZE = (1920, 1080)


class TrackerConfig(BaseModel):
    costs: CostWeights = Field(default_factory=CostWeights)
    structural: StructuralConfig = Field(default_factory=StructuralConfig)
    gate: GateConfig = Field(default_factory=GateConfig)
    recovery: RecoveryConfig = Field(default_factory=RecoveryConfig)
    structural_enabled: bool = True
    appearance_enabled: bool = True
    min_confidence: Optional[float] = None
    gap_fill: bool = Field(
        False,
        description="Offline output: add the predicted states of a gap once its trajectory is reacquired.",
    )

    def resolved(self, image_size: Tuple[float, float]) -> TrackerConfig:
        """Fill the image-size dependent defaults (motion scale, phi_s)."""
        return self.model_copy(update={
            "costs": self.costs.resolved(image_size),
            "structural": self.structural.resolved(image_size),
        })


@dataclass
class TrackerState:
    trajectories: List[Trajectory] = field(default_factory=list)
    next_track_id: int = 1
    frame: int = 0
    appearances: Dict[int, AppearanceDescriptor] = field(default_factory=dict)
    confidences: Dict[int, float] = field(default_factory=dict)


@dataclass
class SequenceRun:
    name: str
    records: List[ResultRecord]
    timings: Dict[str, float]
    frame_count: int
    image_size: Tuple[float, float]

    @property
    def track_count(self) -> int:
        return len({r.track_id for r in self.records})


def _to_record(state: TrackState, confidence: float) -> ResultRecord:
    return ResultRecord(state.frame, state.track_id, state.bbox, confidence)


class OnlineTracker:
    """Holds one sequence's state. Frames must be fed in order, starting at 1."""

    def __init__(self, cfg: TrackerConfig, image_size: Tuple[float, float]):
        self.cfg = cfg.resolved(image_size)
        self.image_size = image_size
        self.state = TrackerState()
        self.timings: Dict[str, float] = {stage: 0.0 for stage in STAGES}
        self.gap_records: List[ResultRecord] = []

    def _stage(self, name: str, started: float) -> float:
        now = time.perf_counter()
        self.timings[name] += now - started
        return now

    def process_frame(
        self, frame: int, detections: Sequence[Detection], frame_image: Optional[FrameImage] = None
    ) -> List[ResultRecord]:
        """
        Associate one frame and return its records, one per matched or new trajectory.

        Records never refer to earlier frames. With gap_fill set, the gap states of
        trajectories reacquired this frame are collected in gap_records instead.
        """
        expected = self.state.frame + 1
        if frame != expected:
            raise FrameOrderError(expected, frame)
        for d in detections:
            if d.frame != frame:
                raise FrameOrderError(frame, d.frame)

        cfg = self.cfg
        if cfg.min_confidence is not None:
            detections = [d for d in detections if d.confidence >= cfg.min_confidence]
        detections = list(detections)
        trajectories = self.state.trajectories
        t0 = time.perf_counter()

        predictions = predict_locations(trajectories, cfg.costs)
        det_appearance = None
        if cfg.appearance_enabled and frame_image is not None:
            det_appearance = detection_descriptors(detections, frame_image, cfg.costs.histogram_bins)
        raw = build_raw_cost_matrix(
            detections, trajectories, cfg.costs,
            predictions=predictions,
            track_appearance=self.state.appearances if cfg.appearance_enabled else None,
            det_appearance=det_appearance,
        )
        t0 = self._stage("costs", t0)

        costs = raw
        if cfg.structural_enabled and raw.size:
            det_points = centers_array(d.center for d in detections)
            trk_points = centers_array(t.last_state.center for t in trajectories)
            match_sets = match_sets_for_gated_pairs(raw, cfg.gate.gate, det_points, trk_points, cfg.structural)
            costs = modify_cost_matrix(raw, match_sets)
        t0 = self._stage("structural", t0)

        assignment = solve_gated_assignment(costs, cfg.gate)
        t0 = self._stage("assignment", t0)

        predicted = self._recover(assignment, detections, trajectories, predictions)
        t0 = self._stage("recovery", t0)

        result = step_lifecycle(
            trajectories, assignment, detections, cfg.recovery,
            frame=frame, next_track_id=self.state.next_track_id, predicted=predicted,
        )
        self.state.trajectories = result.active
        self.state.next_track_id = result.next_track_id
        self.state.frame = frame

        confidence: Dict[int, float] = {}
        for i, j in assignment.matches:
            track_id = trajectories[j].track_id
            confidence[track_id] = detections[i].confidence
            if det_appearance is not None and det_appearance[i] is not None:
                self.state.appearances[track_id] = det_appearance[i]
        for i, track in zip(assignment.unmatched_detections, result.spawned):
            confidence[track.track_id] = detections[i].confidence
            if det_appearance is not None and det_appearance[i] is not None:
                self.state.appearances[track.track_id] = det_appearance[i]
        if cfg.gap_fill:
            for track_id, gap in result.reacquired.items():
                # gap confidence: the weaker of the two observations bounding it
                bound = min(self.state.confidences.get(track_id, confidence[track_id]), confidence[track_id])
                self.gap_records.extend(_to_record(s, bound) for s in gap)
        self.state.confidences.update(confidence)
        for track in result.terminated:
            self.state.appearances.pop(track.track_id, None)
            self.state.confidences.pop(track.track_id, None)

        records = [_to_record(s, confidence[s.track_id]) for s in result.emitted]
        self._stage("lifecycle", t0)

        log.debug("frame %d: %d detections, %d matched, %d new, %d terminated, %d active",
                  frame, len(detections), len(assignment.matches), len(result.spawned),
                  len(result.terminated), len(result.active))
        return records

    def _recover(
        self,
        assignment: AssignmentResult,
        detections: Sequence[Detection],
        trajectories: Sequence[Trajectory],
        predictions: Sequence[Point2],
    ) -> Dict[int, Point2]:
        """Positions for trajectories that stay alive without a detection, keyed by track_id."""
        cfg = self.cfg.recovery
        matched_rows = assignment.matched_trajectory_for
        matched = [
            (detections[matched_rows[j]].center, trajectories[j].last_state.center)
            for j in range(len(trajectories)) if j in matched_rows
        ]
        missing = [
            MissingTarget(
                track_id=t.track_id,
                motion_prediction=predictions[j],
                previous=t.last_state.center,
                age=t.miss_count + 1,
            )
            for j, t in enumerate(trajectories)
            if j not in matched_rows and t.miss_count + 1 <= cfg.window
        ]
        if not missing:
            return {}
        if not cfg.enabled:
            return {m.track_id: m.motion_prediction for m in missing}
        positions = predict_missing_targets(matched, missing, cfg)
        log.debug("recovered %d missing targets against %d matched", len(missing), len(matched))
        return {m.track_id: p for m, p in zip(missing, positions)}


def infer_image_size(frames: Dict[int, List[Detection]]) -> Tuple[float, float]:
    """Image extent covered by the detections, used when no seqinfo is available."""
    right = max((d.bbox.right for dets in frames.values() for d in dets), default=0.0)
    bottom = max((d.bbox.bottom for dets in frames.values() for d in dets), default=0.0)
    if right <= 0 or bottom <= 0:
        return FALLBACK_IMAGE_SIZE
    return (float(math.ceil(right)), float(math.ceil(bottom)))


def track_frames(
    frames: Dict[int, List[Detection]],
    cfg: TrackerConfig,
    image_size: Optional[Tuple[float, float]] = None,
    frame_count: Optional[int] = None,
    *,
    name: str = "",
    image_loader: Optional[Callable[[int], FrameImage]] = None,
) -> SequenceRun:
    """
    Track in-memory detections frame by frame; records come back sorted by (frame, track_id).

    With cfg.gap_fill the run is no longer causal: reacquired gaps are written back
    into the frames they span.

    Args:
        frames: {frame: detections}, as returned by parse_det_file
        cfg: tracker configuration; image-size defaults are resolved here
        image_size: (width, height); inferred from the detections when None
        frame_count: frames to run; at least the last frame with detections
        name: label for logs
        image_loader: frame -> FrameImage, may raise AppearanceUnavailable
    """
    started = time.perf_counter()
    frame_count = max(frame_count or 0, max(frames, default=0))
    image_size = image_size or infer_image_size(frames)
    tracker = OnlineTracker(cfg, image_size)
    use_images = cfg.appearance_enabled and image_loader is not None

    records: List[ResultRecord] = []
    warned = False
    for frame in range(1, frame_count + 1):
        image = None
        if use_images:
            try:
                image = image_loader(frame)
            except AppearanceUnavailable as e:
                if not warned:
                    log.warning("appearance unavailable (%s); running motion-only for frames without images", e)
                    warned = True
        records.extend(tracker.process_frame(frame, frames.get(frame, []), image))

    if cfg.gap_fill:
        records.extend(tracker.gap_records)
        log.info("gap fill added %d predicted records", len(tracker.gap_records))
    records.sort(key=lambda r: r.sort_key)
    elapsed = time.perf_counter() - started
    timings = dict(tracker.timings, total=elapsed)
    log.info("tracked %s: %d frames, %d records, %d tracks in %.3fs",
             name or "sequence", frame_count, len(records), len({r.track_id for r in records}), elapsed)
    return SequenceRun(name, records, timings, frame_count, image_size)


def run_sequence(source: SequenceSource, cfg: TrackerConfig) -> SequenceRun:
    """Parse the source's detections and track them, loading frames when an image directory is set."""
    frames = parse_det_file(source.det_path)
    loader = None
    if source.image_dir is not None:
        loader = partial(load_frame, source)
    elif cfg.appearance_enabled:
        log.info("no image directory for %s; running motion-only", source.name or source.det_path)
    return track_frames(frames, cfg, source.image_size, source.frame_count,
                        name=source.name or str(source.det_path), image_loader=loader)
