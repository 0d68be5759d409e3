# structure_tracker/synth.py
"""
Synthetic multi-target scenarios seen by a moving camera.

Camera motion is a rigid image-plane translation shared by every target in a frame.
Each noise source draws from its own random stream so that, for a fixed seed, changing
one model (e.g. the camera) leaves the others untouched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, model_validator

from structure_tracker.core_model import BBox, Detection, Point2
from structure_tracker.errors import ConfigError, TrackerIOError
from structure_tracker.motchallenge_io import (
    GroundTruth,
    GroundTruthEntry,
    write_det_file,
    write_gt_file,
    write_seqinfo,
)

log = logging.getLogger(__name__)


class ScenarioConfig(BaseModel):
    """Flat scenario description; every field is also a key of the scenario file."""
    target_count: int = Field(10, ge=1)
    frame_count: int = Field(100, ge=1)
    image_width: int = Field(1920, ge=16)
    image_height: int = Field(1080, ge=16)
    start_region: float = Field(0.5, gt=0.0, le=1.0, description="Side of the centred start area, as a fraction of the image.")

    target_width: float = Field(40.0, gt=0.0)
    target_height: float = Field(80.0, gt=0.0)
    size_jitter: float = Field(0.2, ge=0.0, lt=1.0, description="Relative spread of target sizes.")

    motion: Literal["constant", "sinusoidal"] = "constant"
    speed_min: float = Field(0.0, ge=0.0)
    speed_max: float = Field(3.0, ge=0.0)
    sway_amplitude: float = Field(5.0, ge=0.0)
    sway_period: float = Field(30.0, gt=0.0)

    camera_sigma: float = Field(0.0, ge=0.0, description="Random-walk step, pixels per frame.")
    camera_jump: float = Field(0.0, ge=0.0, description="Abrupt jump length in pixels.")
    camera_jump_every: int = Field(0, ge=0, description="Frames between jumps; 0 disables jumps.")

    jitter_sigma: float = Field(0.0, ge=0.0)
    fp_rate: float = Field(0.0, ge=0.0, le=1.0)
    fn_rate: float = Field(0.0, ge=0.0, le=1.0)
    appearance: Literal["distinct", "identical"] = Field(
        "distinct",
        description="Recorded in the scenario only; synthetic sequences ship no frames, so runs on them are motion-only.",
    )
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> ScenarioConfig:
        if self.speed_max < self.speed_min:
            raise ValueError("speed_max must be >= speed_min")
        return self

    @property
    def image_size(self) -> Tuple[int, int]:
        return (self.image_width, self.image_height)


@dataclass
class ScenarioOutput:
    config: ScenarioConfig
    ground_truth: GroundTruth
    detections: Dict[int, List[Detection]]
    camera_offsets: np.ndarray                   # (frame_count, 2), row 0 is frame 1
    target_centers: np.ndarray                   # (frame_count, target_count, 2), camera applied
    dropped_boxes: int = 0                       # removed by the false-negative model
    outside_boxes: int = 0                       # ground-truth boxes that left the image

    @property
    def detection_count(self) -> int:
        return sum(len(v) for v in self.detections.values())


def _streams(seed: int) -> Tuple[np.random.Generator, ...]:
    targets, camera, noise, false_pos = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(s) for s in (targets, camera, noise, false_pos))


def _sizes(rng: np.random.Generator, cfg: ScenarioConfig, count: int) -> np.ndarray:
    scale = 1.0 + rng.uniform(-cfg.size_jitter, cfg.size_jitter, size=(count, 1))
    return scale * np.array([[cfg.target_width, cfg.target_height]])


def _target_paths(rng: np.random.Generator, cfg: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame centers (frames, targets, 2) and sizes (targets, 2)."""
    n, frames = cfg.target_count, cfg.frame_count
    size = np.array(cfg.image_size, dtype=float)
    half = 0.5 * cfg.start_region * size
    start = size / 2.0 + rng.uniform(-1.0, 1.0, size=(n, 2)) * half
    speed = rng.uniform(cfg.speed_min, cfg.speed_max, size=n)
    heading = rng.uniform(0.0, 2.0 * math.pi, size=n)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=n)
    sizes = _sizes(rng, cfg, n)

    direction = np.column_stack([np.cos(heading), np.sin(heading)])
    velocity = direction * speed[:, None]
    steps = np.arange(frames, dtype=float)[:, None, None]
    centers = start[None, :, :] + steps * velocity[None, :, :]
    if cfg.motion == "sinusoidal":
        perpendicular = np.column_stack([-direction[:, 1], direction[:, 0]])
        sway = cfg.sway_amplitude * np.sin(2.0 * math.pi * steps[..., 0] / cfg.sway_period + phase[None, :])
        centers = centers + sway[:, :, None] * perpendicular[None, :, :]
    return centers, sizes


def _camera_offsets(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    offsets = np.zeros((cfg.frame_count, 2))
    for k in range(1, cfg.frame_count):
        step = rng.normal(0.0, 1.0, size=2) * cfg.camera_sigma
        angle = rng.uniform(0.0, 2.0 * math.pi)
        if cfg.camera_jump_every and k % cfg.camera_jump_every == 0:
            step = step + cfg.camera_jump * np.array([math.cos(angle), math.sin(angle)])
        offsets[k] = offsets[k - 1] + step
    return offsets


def generate(cfg: ScenarioConfig) -> ScenarioOutput:
    """Ground truth and detections for one scenario; fully determined by cfg (seed included)."""
    target_rng, camera_rng, noise_rng, fp_rng = _streams(cfg.seed)
    world, sizes = _target_paths(target_rng, cfg)
    offsets = _camera_offsets(camera_rng, cfg)
    centers = world + offsets[:, None, :]
    width, height = cfg.image_size

    gt_frames: Dict[int, List[GroundTruthEntry]] = {}
    detections: Dict[int, List[Detection]] = {}
    dropped = outside = 0

    for k in range(cfg.frame_count):
        frame = k + 1
        entries: List[GroundTruthEntry] = []
        dets: List[Detection] = []
        for target in range(cfg.target_count):
            w, h = sizes[target]
            box = BBox(0.0, 0.0, float(w), float(h)).recentered(Point2.from_array(centers[k, target]))
            clipped = box.clipped(width, height)
            # one miss draw and one jitter pair per target per frame, outside boxes included
            missed = noise_rng.uniform() < cfg.fn_rate
            jitter = noise_rng.normal(0.0, 1.0, size=2) * cfg.jitter_sigma
            if clipped is None:
                outside += 1
                continue
            entries.append(GroundTruthEntry(target + 1, clipped, True))
            if missed:
                dropped += 1
                continue
            dets.append(Detection(frame, clipped.translated(float(jitter[0]), float(jitter[1])), 1.0))

        false_count = int(fp_rng.binomial(cfg.target_count, cfg.fp_rate))
        if false_count:
            fp_sizes = _sizes(fp_rng, cfg, false_count)
            for w, h in fp_sizes:
                left = fp_rng.uniform(0.0, max(1.0, width - w))
                top = fp_rng.uniform(0.0, max(1.0, height - h))
                confidence = fp_rng.uniform(0.5, 1.0)
                dets.append(Detection(frame, BBox(float(left), float(top), float(w), float(h)), float(confidence)))

        if entries:
            gt_frames[frame] = entries
        if dets:
            detections[frame] = [Detection(d.frame, d.bbox, d.confidence, i) for i, d in enumerate(dets)]

    log.info("Generated scenario seed=%d: %d targets, %d frames, %d detections (%d dropped, %d outside)",
             cfg.seed, cfg.target_count, cfg.frame_count,
             sum(len(v) for v in detections.values()), dropped, outside)
    return ScenarioOutput(
        config=cfg,
        ground_truth=GroundTruth(frames=gt_frames, available=True),
        detections=detections,
        camera_offsets=offsets,
        target_centers=centers,
        dropped_boxes=dropped,
        outside_boxes=outside,
    )


def write_scenario(output: ScenarioOutput, out_dir: Path | str, name: str = "synth") -> Path:
    """Write det/det.txt, gt/gt.txt and seqinfo.ini under out_dir."""
    out_dir = Path(out_dir)
    write_det_file(output.detections, out_dir / "det" / "det.txt")
    write_gt_file(output.ground_truth, out_dir / "gt" / "gt.txt")
    write_seqinfo(out_dir / "seqinfo.ini", name, output.config.frame_count, output.config.image_size)
    log.info("Wrote scenario to %s", out_dir)
    return out_dir


def load_scenario_config(path: Path | str, **overrides) -> ScenarioConfig:
    """Read a flat key=value scenario file; keyword overrides win over file values."""
    path = Path(path)
    if not path.is_file():
        raise TrackerIOError(path, "scenario file not found")
    values = {k: v for k, v in dotenv_values(path).items() if v not in (None, "")}
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - set(ScenarioConfig.model_fields))
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {', '.join(unknown)}")
    try:
        return ScenarioConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"{path}: invalid value for {'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from e
