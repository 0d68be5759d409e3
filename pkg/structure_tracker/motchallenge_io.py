# structure_tracker/motchallenge_io.py
"""
MOTChallenge 2015 CSV reading and writing, sequence metadata, and frame images.

Formats:
    det:    frame,id,left,top,width,height,conf,x,y,z        (id = -1)
    gt:     frame,id,left,top,width,height,flag,class,visibility
    result: frame,id,left,top,width,height,conf,-1,-1,-1
"""

from __future__ import annotations

import configparser
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import cv2
import numpy as np
import pandas as pd

from structure_tracker.core_model import BBox, Detection
from structure_tracker.errors import AppearanceUnavailable, ParseError, TrackerIOError

log = logging.getLogger(__name__)

DEFAULT_IMAGE_PATTERN = "{frame:06d}.jpg"

DET_FIELDS = ("frame", "id", "left", "top", "width", "height", "conf", "x", "y", "z")
GT_FIELDS = ("frame", "id", "left", "top", "width", "height", "flag", "class", "visibility")


@dataclass(frozen=True)
class SequenceSource:
    """Where one sequence's inputs live."""
    det_path: Path
    gt_path: Optional[Path] = None
    image_dir: Optional[Path] = None
    frame_count: Optional[int] = None
    image_size: Optional[Tuple[int, int]] = None
    image_pattern: str = DEFAULT_IMAGE_PATTERN
    name: str = ""

    def __post_init__(self) -> None:
        if self.frame_count is not None and self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")

    @classmethod
    def from_directory(cls, seq_dir: Path | str) -> SequenceSource:
        """
        Build a source from the standard layout:
        seq_dir/det/det.txt, seq_dir/gt/gt.txt, seq_dir/img1/, seq_dir/seqinfo.ini
        """
        seq_dir = Path(seq_dir)
        info = read_seqinfo(seq_dir / "seqinfo.ini") if (seq_dir / "seqinfo.ini").exists() else {}

        image_dir = seq_dir / info.get("imDir", "img1")
        ext = info.get("imExt", ".jpg")
        gt_path = seq_dir / "gt" / "gt.txt"
        width, height = info.get("imWidth"), info.get("imHeight")

        return cls(
            det_path=seq_dir / "det" / "det.txt",
            gt_path=gt_path if gt_path.exists() else None,
            image_dir=image_dir if image_dir.is_dir() else None,
            frame_count=int(info["seqLength"]) if "seqLength" in info else None,
            image_size=(int(width), int(height)) if width and height else None,
            image_pattern="{frame:06d}" + ext,
            name=info.get("name", seq_dir.name),
        )


@dataclass(frozen=True)
class ResultRecord:
    """One output line: a tracked box for one identity at one frame."""
    frame: int
    track_id: int
    bbox: BBox
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.frame < 1:
            raise ValueError(f"result frame must be >= 1, got {self.frame}")
        if self.track_id < 1:
            raise ValueError(f"result track_id must be >= 1, got {self.track_id}")

    @property
    def sort_key(self) -> Tuple[int, int]:
        return (self.frame, self.track_id)


@dataclass(frozen=True)
class GroundTruthEntry:
    track_id: int
    bbox: BBox
    considered: bool = True


@dataclass
class GroundTruth:
    """Parsed ground truth grouped by frame. `available` is False when no gt file was configured."""
    frames: Dict[int, List[GroundTruthEntry]] = field(default_factory=dict)
    available: bool = True
    path: Optional[Path] = None

    @classmethod
    def unavailable(cls) -> GroundTruth:
        return cls(frames={}, available=False)

    @property
    def considered_count(self) -> int:
        return sum(1 for entries in self.frames.values() for e in entries if e.considered)

    @property
    def last_frame(self) -> int:
        return max(self.frames) if self.frames else 0


@dataclass(frozen=True)
class FrameImage:
    """Decoded RGB frame, uint8 (height, width, 3)."""
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.size == 0:
            raise ValueError(f"FrameImage needs a non-empty (H, W, 3) array, got {self.pixels.shape}")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------
# widest row accepted; MOTChallenge rows have at most 10 fields
MAX_COLUMNS = 16


def _read_table(path: Path) -> pd.DataFrame:
    """
    Raw cells as stripped strings, one row per non-blank line, indexed by 1-based line number.
    Cells missing at the end of a short row are "".
    """
    try:
        table = pd.read_csv(path, header=None, names=range(MAX_COLUMNS), index_col=False, dtype=str,
                            skip_blank_lines=False, keep_default_na=False)
    except FileNotFoundError:
        raise TrackerIOError(path, "file not found") from None
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=range(MAX_COLUMNS), dtype=str)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(path, int(match.group(1)) if match else 0, "line", "", str(e)) from e
    except (OSError, UnicodeDecodeError) as e:
        raise TrackerIOError(path, f"cannot read: {e}") from e

    table = table.fillna("").apply(lambda column: column.str.strip())
    table.index = table.index + 1
    return table[table.ne("").any(axis=1)]


class _Columns:
    """
    Column-wise validation of a raw table. Problems are collected per column and
    raise_first() reports the earliest one in file order, field order within a line.
    """

    def __init__(self, path: Path, table: pd.DataFrame, fields: Tuple[str, ...]):
        self.path = path
        self.table = table
        self.fields = fields
        self.lines = table.index.to_numpy()
        filled = table.ne("").to_numpy()
        self.widths = np.where(filled.any(axis=1), filled.shape[1] - np.argmax(filled[:, ::-1], axis=1), 0)
        self._errors: List[Tuple[int, int, ParseError]] = []

    def _name(self, column: int) -> str:
        return self.fields[column] if column < len(self.fields) else "line"

    def flag(self, mask: np.ndarray, column: int, reason: str) -> None:
        """Record the first row of `mask` as a problem with `column`."""
        hits = np.flatnonzero(mask)
        if len(hits) == 0:
            return
        row = int(hits[0])
        line = int(self.lines[row])
        value = self.table.iat[row, column] if column < self.table.shape[1] else ""
        self._errors.append((line, column, ParseError(self.path, line, self._name(column), value, reason)))

    def require_width(self, required: int) -> None:
        short = self.widths < required
        hits = np.flatnonzero(short)
        if len(hits) == 0:
            return
        row = int(hits[0])
        width = int(self.widths[row])
        line = int(self.lines[row])
        cells = ",".join(self.table.iloc[row, :width])
        self._errors.append((line, -1, ParseError(self.path, line, self._name(width), cells,
                                                  f"expected at least {required} fields")))

    def number(
        self, column: int, *, integer: bool = False, rows: Optional[np.ndarray] = None,
        default: Optional[float] = None,
    ) -> np.ndarray:
        """
        Column as floats. Only `rows` (all when None) are validated; with a default,
        empty cells take it instead of failing.
        """
        raw = self.table[column]
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        checked = np.ones(len(values), dtype=bool) if rows is None else rows.copy()
        if default is not None:
            empty = raw.eq("").to_numpy()
            values[empty] = default
            checked &= ~empty
        self.flag(checked & np.isnan(values), column, "not a number")
        self.flag(checked & np.isinf(values), column, "not finite")
        if integer:
            finite = np.isfinite(values)
            self.flag(checked & finite & (values != np.round(np.where(finite, values, 0.0))), column,
                      "not an integer")
        return values

    def boxes(self) -> Tuple[np.ndarray, ...]:
        """frame, id, left, top, width, height and the mask of rows with a positive size."""
        frame = self.number(0, integer=True)
        self.flag(np.isfinite(frame) & (frame < 1), 0, "frame index must be >= 1")
        track_id = self.number(1, integer=True)
        left, top, width, height = (self.number(k) for k in range(2, 6))
        keep = (width > 0) & (height > 0)
        dropped = ~keep & np.isfinite(width) & np.isfinite(height)
        for line, w, h in zip(self.lines[dropped], width[dropped], height[dropped]):
            log.warning("%s:%d: dropping box with non-positive size %gx%g", self.path, line, w, h)
        return frame, track_id, left, top, width, height, keep

    def raise_first(self) -> None:
        if self._errors:
            raise min(self._errors, key=lambda e: (e[0], e[1]))[2]


def _detection_order(d: Detection) -> Tuple[float, float, float, float, float]:
    return (d.bbox.left, d.bbox.top, d.bbox.width, d.bbox.height, -d.confidence)


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------
def parse_det_file(path: Path | str, min_confidence: Optional[float] = None) -> Dict[int, List[Detection]]:
    """
    Parse a detection file into {frame: [Detection, ...]} ordered by frame.

    Within a frame detections are ordered by geometry, so shuffled input yields identical output,
    and detection_id is the ordinal in that order.

    Args:
        path: det.txt path
        min_confidence: drop detections below this score (None keeps all)
    """
    path = Path(path)
    cols = _Columns(path, _read_table(path), DET_FIELDS)
    cols.require_width(7)
    frame, _, left, top, width, height, keep = cols.boxes()
    conf = cols.number(6, rows=keep)
    cols.raise_first()

    dropped = int(np.count_nonzero(~keep))
    if min_confidence is not None:
        keep = keep & (conf >= min_confidence)
    grouped: Dict[int, List[Detection]] = {}
    for f, x, y, w, h, c in zip(frame[keep], left[keep], top[keep], width[keep], height[keep], conf[keep]):
        bbox = BBox(float(x), float(y), float(w), float(h))
        grouped.setdefault(int(f), []).append(Detection(int(f), bbox, float(c)))

    result: Dict[int, List[Detection]] = {}
    for f in sorted(grouped):
        ordered = sorted(grouped[f], key=_detection_order)
        result[f] = [Detection(d.frame, d.bbox, d.confidence, k) for k, d in enumerate(ordered)]

    log.info("Parsed %s: %d detections over %d frames (%d dropped)",
             path, sum(len(v) for v in result.values()), len(result), dropped)
    return result


def parse_gt_file(path: Optional[Path | str]) -> GroundTruth:
    """
    Parse a ground-truth file. Rows with flag 0 are kept but marked not considered.
    A None path yields GroundTruth.unavailable() rather than an error.
    """
    if path is None:
        return GroundTruth.unavailable()
    path = Path(path)
    cols = _Columns(path, _read_table(path), GT_FIELDS)
    cols.require_width(6)
    frame, track_id, left, top, width, height, keep = cols.boxes()
    flag = cols.number(6, rows=keep, default=1.0)
    cols.raise_first()

    frames: Dict[int, List[GroundTruthEntry]] = {}
    rows = zip(frame[keep], track_id[keep], left[keep], top[keep], width[keep], height[keep], flag[keep])
    for f, t, x, y, w, h, considered in rows:
        bbox = BBox(float(x), float(y), float(w), float(h))
        frames.setdefault(int(f), []).append(GroundTruthEntry(int(t), bbox, bool(considered != 0)))

    ordered = {f: sorted(frames[f], key=lambda e: e.track_id) for f in sorted(frames)}
    log.info("Parsed ground truth %s: %d boxes over %d frames",
             path, sum(len(v) for v in ordered.values()), len(ordered))
    return GroundTruth(frames=ordered, available=True, path=path)


def parse_result_file(path: Path | str) -> List[ResultRecord]:
    """Read a tracker output file back into records sorted by (frame, track_id)."""
    path = Path(path)
    cols = _Columns(path, _read_table(path), DET_FIELDS)
    cols.require_width(6)
    frame, track_id, left, top, width, height, keep = cols.boxes()
    cols.flag(keep & np.isfinite(track_id) & (track_id < 1), 1, "result track ids must be >= 1")
    conf = cols.number(6, rows=keep, default=1.0)
    cols.raise_first()

    records = [
        ResultRecord(int(f), int(t), BBox(float(x), float(y), float(w), float(h)), float(c))
        for f, t, x, y, w, h, c in zip(frame[keep], track_id[keep], left[keep], top[keep],
                                       width[keep], height[keep], conf[keep])
    ]
    records.sort(key=lambda r: r.sort_key)
    return records


def read_seqinfo(path: Path | str) -> Dict[str, str]:
    """Read the [Sequence] section of a seqinfo.ini file."""
    path = Path(path)
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep imWidth casing
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise TrackerIOError(path, f"cannot read: {e}") from e
    except configparser.Error as e:
        raise TrackerIOError(path, f"malformed seqinfo: {e}") from e
    if not parser.has_section("Sequence"):
        raise TrackerIOError(path, "missing [Sequence] section")
    return dict(parser.items("Sequence"))


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------
def format_number(value: float) -> str:
    """Up to two decimals, trailing zeros dropped, no negative zero."""
    text = f"{round(float(value), 2):.2f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as e:
        raise TrackerIOError(path, f"cannot write: {e}") from e


def write_results(records: Iterable[ResultRecord], path: Path | str) -> None:
    """Write tracker output, one line per record, sorted by (frame, track_id)."""
    ordered = sorted(records, key=lambda r: r.sort_key)
    _write_lines(Path(path), (
        ",".join([
            str(r.frame), str(r.track_id),
            format_number(r.bbox.left), format_number(r.bbox.top),
            format_number(r.bbox.width), format_number(r.bbox.height),
            format_number(r.confidence), "-1", "-1", "-1",
        ])
        for r in ordered
    ))
    log.info("Wrote %d result records to %s", len(ordered), path)


def write_det_file(detections: Dict[int, List[Detection]], path: Path | str) -> None:
    lines = []
    for frame in sorted(detections):
        for d in detections[frame]:
            lines.append(",".join([
                str(frame), "-1",
                format_number(d.bbox.left), format_number(d.bbox.top),
                format_number(d.bbox.width), format_number(d.bbox.height),
                format_number(d.confidence), "-1", "-1", "-1",
            ]))
    _write_lines(Path(path), lines)


def write_gt_file(ground_truth: GroundTruth, path: Path | str) -> None:
    lines = []
    for frame in sorted(ground_truth.frames):
        for e in ground_truth.frames[frame]:
            lines.append(",".join([
                str(frame), str(e.track_id),
                format_number(e.bbox.left), format_number(e.bbox.top),
                format_number(e.bbox.width), format_number(e.bbox.height),
                "1" if e.considered else "0", "1", "1",
            ]))
    _write_lines(Path(path), lines)


def write_seqinfo(path: Path | str, name: str, frame_count: int, image_size: Tuple[int, int],
                  frame_rate: int = 30) -> None:
    width, height = image_size
    _write_lines(Path(path), [
        "[Sequence]",
        f"name={name}",
        "imDir=img1",
        f"frameRate={frame_rate}",
        f"seqLength={frame_count}",
        f"imWidth={width}",
        f"imHeight={height}",
        "imExt=.jpg",
    ])


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------
def frame_path(source: SequenceSource, frame: int) -> Path:
    if source.image_dir is None:
        raise AppearanceUnavailable("sequence has no image directory")
    return Path(source.image_dir) / source.image_pattern.format(frame=frame)


def load_frame(source: SequenceSource, frame: int) -> FrameImage:
    """
    Decode one frame to RGB.
    Raises AppearanceUnavailable when the image is missing or unreadable, so the
    tracker can continue in motion-only mode.
    """
    path = frame_path(source, frame)
    if not path.exists():
        raise AppearanceUnavailable("frame image not found", path)
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise AppearanceUnavailable("frame image could not be decoded", path)
    return FrameImage(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
