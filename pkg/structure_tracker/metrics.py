# structure_tracker/metrics.py
"""
CLEAR-MOT evaluation of tracker output against MOTChallenge ground truth.

Per frame, correspondences from earlier frames are kept while their IoU stays at or above
the threshold; remaining boxes are matched by minimum total (1 - IoU). ID switches are
counted against the most recent hypothesis matched to each ground-truth identity.
Ground-truth rows with flag 0 are left out of scoring entirely.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment

from structure_tracker.core_model import iou_matrix
from structure_tracker.errors import NotEvaluableError
from structure_tracker.motchallenge_io import GroundTruth, ResultRecord

log = logging.getLogger(__name__)

MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2

REPORT_FIELDS = ("MOTA", "MOTP", "FAF", "MT", "PT", "ML", "FP", "FN", "IDSW", "FM", "GT",
                 "recall", "precision", "matches", "frames", "gt_tracks")


class MetricsReport(BaseModel):
    MOTA: float = Field(le=1.0)
    MOTP: float = Field(ge=0.0, le=1.0)
    FAF: float = Field(ge=0.0)
    MT: int = Field(ge=0)
    PT: int = Field(ge=0)
    ML: int = Field(ge=0)
    FP: int = Field(ge=0)
    FN: int = Field(ge=0)
    IDSW: int = Field(ge=0)
    FM: int = Field(ge=0)
    GT: int = Field(gt=0)
    recall: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    matches: int = Field(ge=0)
    frames: int = Field(ge=0)
    gt_tracks: int = Field(ge=0)


@dataclass
class FrameMatchState:
    """Correspondence bookkeeping carried from frame to frame."""
    last_match: Dict[int, int] = field(default_factory=dict)
    was_tracked: Dict[int, bool] = field(default_factory=dict)
    ever_tracked: Set[int] = field(default_factory=set)
    present: Dict[int, int] = field(default_factory=lambda: defaultdict(int))
    tracked: Dict[int, int] = field(default_factory=lambda: defaultdict(int))


def _match_frame(gt_ids, gt_boxes, hyp_ids, hyp_boxes, state: FrameMatchState, threshold: float):
    """Returns list of (gt index, hyp index, iou)."""
    overlaps = iou_matrix(gt_boxes, hyp_boxes)
    pairs = []
    used_gt: Set[int] = set()
    used_hyp: Set[int] = set()
    hyp_index = {h: k for k, h in enumerate(hyp_ids)}

    for g, gt_id in enumerate(gt_ids):
        previous = state.last_match.get(gt_id)
        h = hyp_index.get(previous) if previous is not None else None
        if h is None or h in used_hyp:
            continue
        if overlaps[g, h] >= threshold:
            pairs.append((g, h, float(overlaps[g, h])))
            used_gt.add(g)
            used_hyp.add(h)

    free_gt = [g for g in range(len(gt_ids)) if g not in used_gt]
    free_hyp = [h for h in range(len(hyp_ids)) if h not in used_hyp]
    if free_gt and free_hyp:
        sub = overlaps[np.ix_(free_gt, free_hyp)]
        cost = np.where(sub >= threshold, 1.0 - sub, 1e6)
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if sub[r, c] >= threshold:
                pairs.append((free_gt[r], free_hyp[c], float(sub[r, c])))
    return pairs


def evaluate(
    gt: GroundTruth,
    results: Iterable[ResultRecord],
    iou_threshold: float = 0.5,
    frame_count: Optional[int] = None,
) -> MetricsReport:
    """
    Args:
        gt: parsed ground truth
        results: tracker output, any order
        iou_threshold: minimum IoU for a correspondence
        frame_count: frames used for FAF; defaults to the last frame seen in either input

    Raises:
        NotEvaluableError: no considered ground-truth boxes
    """
    total_gt = gt.considered_count if gt.available else 0
    if total_gt == 0:
        raise NotEvaluableError("ground truth contains no considered boxes; nothing to evaluate")

    hyps: Dict[int, List[ResultRecord]] = defaultdict(list)
    for r in results:
        hyps[r.frame].append(r)
    last_frame = max(gt.last_frame, max(hyps, default=0))
    frames = frame_count if frame_count is not None else last_frame

    state = FrameMatchState()
    fp = fn = idsw = fm = matches = 0
    iou_sum = 0.0

    for frame in range(1, last_frame + 1):
        entries = sorted((e for e in gt.frames.get(frame, []) if e.considered), key=lambda e: e.track_id)
        frame_hyps = sorted(hyps.get(frame, []), key=lambda r: (r.track_id, r.bbox.left, r.bbox.top))
        gt_ids = [e.track_id for e in entries]
        hyp_ids = [r.track_id for r in frame_hyps]

        pairs = _match_frame(gt_ids, [e.bbox for e in entries], hyp_ids, [r.bbox for r in frame_hyps],
                             state, iou_threshold)
        matched_gt = {g for g, _, _ in pairs}

        for g, h, overlap in pairs:
            gt_id, hyp_id = gt_ids[g], hyp_ids[h]
            previous = state.last_match.get(gt_id)
            if previous is not None and previous != hyp_id:
                idsw += 1
            if gt_id in state.ever_tracked and not state.was_tracked.get(gt_id, False):
                fm += 1
            state.last_match[gt_id] = hyp_id
            state.ever_tracked.add(gt_id)
            state.tracked[gt_id] += 1
            iou_sum += overlap

        for g, gt_id in enumerate(gt_ids):
            state.present[gt_id] += 1
            state.was_tracked[gt_id] = g in matched_gt

        matches += len(pairs)
        fp += len(frame_hyps) - len(pairs)
        fn += len(entries) - len(pairs)

    ratios = [state.tracked[g] / state.present[g] for g in state.present]
    mt = sum(1 for r in ratios if r >= MOSTLY_TRACKED)
    ml = sum(1 for r in ratios if r <= MOSTLY_LOST)

    report = MetricsReport(
        MOTA=1.0 - (fp + fn + idsw) / total_gt,
        MOTP=iou_sum / matches if matches else 0.0,
        FAF=fp / frames if frames else 0.0,
        MT=mt, PT=len(ratios) - mt - ml, ML=ml,
        FP=fp, FN=fn, IDSW=idsw, FM=fm, GT=total_gt,
        recall=matches / total_gt,
        precision=matches / (matches + fp) if matches + fp else 0.0,
        matches=matches, frames=frames, gt_tracks=len(ratios),
    )
    log.debug("evaluated %d frames: MOTA=%.4f FP=%d FN=%d IDSW=%d", frames, report.MOTA, fp, fn, idsw)
    return report


def combine_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Totals over several sequences: counts summed, ratios re-derived, MOTP weighted by matches."""
    if not reports:
        raise NotEvaluableError("no reports to combine")
    total = {name: sum(getattr(r, name) for r in reports)
             for name in ("MT", "PT", "ML", "FP", "FN", "IDSW", "FM", "GT", "matches", "frames", "gt_tracks")}
    iou_sum = sum(r.MOTP * r.matches for r in reports)
    matches, fp, gt_total = total["matches"], total["FP"], total["GT"]
    return MetricsReport(
        MOTA=1.0 - (fp + total["FN"] + total["IDSW"]) / gt_total,
        MOTP=iou_sum / matches if matches else 0.0,
        FAF=fp / total["frames"] if total["frames"] else 0.0,
        recall=matches / gt_total,
        precision=matches / (matches + fp) if matches + fp else 0.0,
        **total,
    )


def _cell(value) -> str:
    return f"{value:.3f}" if isinstance(value, float) else str(value)


def format_table(report: MetricsReport, name: str = "") -> str:
    values = report.model_dump()
    cells = [_cell(values[k]) for k in REPORT_FIELDS]
    widths = [max(len(k), len(c)) for k, c in zip(REPORT_FIELDS, cells)]
    label_width = max(len(name), len("Sequence"))
    header = "Sequence".ljust(label_width) + "  " + "  ".join(k.rjust(w) for k, w in zip(REPORT_FIELDS, widths))
    row = name.ljust(label_width) + "  " + "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return header + "\n" + row + "\n"


def format_kv(report: MetricsReport) -> str:
    values = report.model_dump()
    return "".join(f"{k}={values[k]!r}\n" if isinstance(values[k], float) else f"{k}={values[k]}\n"
                   for k in REPORT_FIELDS)
