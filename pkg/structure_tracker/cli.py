# structure_tracker/cli.py
"""
Command-line entry point: track, evaluate, synth, sweep and compare.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from structure_tracker.config import dump_tracker_config, load_tracker_config
from structure_tracker.errors import ConfigError, DataError, TrackerError, TrackerIOError
from structure_tracker.metrics import MetricsReport, evaluate, format_kv, format_table
from structure_tracker.motchallenge_io import (
    SequenceSource,
    parse_gt_file,
    parse_result_file,
    read_seqinfo,
    write_results,
)
from structure_tracker.synth import ScenarioConfig, generate, load_scenario_config, write_scenario
from structure_tracker.tracker import TrackerConfig, run_sequence, track_frames
from utility.logging_config import setup_logging

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3
SWEEP_PARAMS = ("phi_s", "gate", "lambda", "structural", "window")


class _UsageError(Exception):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for I/O."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# track
# ---------------------------------------------------------------------------
def _track_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {
        "phi_s": args.phi_s,
        "gate": args.gate,
        "window": args.window,
        "min_confidence": args.min_confidence,
    }
    if args.no_structural:
        overrides["structural_enabled"] = False
    if args.no_appearance:
        overrides["appearance_enabled"] = False
    if args.no_recovery:
        overrides["recovery_enabled"] = False
    if args.gap_fill:
        overrides["gap_fill"] = True
    return overrides


def _source_for(args: argparse.Namespace) -> SequenceSource:
    det = Path(args.det)
    seqinfo = Path(args.seqinfo) if args.seqinfo else None
    if seqinfo is None and (det.parent.parent / "seqinfo.ini").exists():
        seqinfo = det.parent.parent / "seqinfo.ini"

    image_size = frame_count = None
    name = det.parent.parent.name if det.parent.name == "det" else det.stem
    if seqinfo is not None:
        info = read_seqinfo(seqinfo)
        if info.get("imWidth") and info.get("imHeight"):
            image_size = (int(info["imWidth"]), int(info["imHeight"]))
        if info.get("seqLength"):
            frame_count = int(info["seqLength"])
        name = info.get("name", name)
    return SequenceSource(
        det_path=det,
        image_dir=Path(args.img) if args.img else None,
        frame_count=frame_count,
        image_size=image_size,
        name=name,
    )


def cmd_track(args: argparse.Namespace) -> int:
    if args.seed_config:
        sys.stdout.write(dump_tracker_config())
        return EXIT_OK
    if not args.det or not args.out:
        raise _UsageError("track needs --det and --out (or --seed-config)")

    cfg = load_tracker_config(args.config, _track_overrides(args))
    run = run_sequence(_source_for(args), cfg)
    write_results(run.records, args.out)

    print(f"records={len(run.records)}")
    print(f"tracks={run.track_count}")
    print(f"frames={run.frame_count}")
    for stage, seconds in run.timings.items():
        print(f"time_{stage}={seconds:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------
def cmd_evaluate(args: argparse.Namespace) -> int:
    gt = parse_gt_file(args.gt)
    results = parse_result_file(args.res)
    report = evaluate(gt, results, iou_threshold=args.iou)
    if args.format == "kv":
        sys.stdout.write(format_kv(report))
    else:
        sys.stdout.write(format_table(report, Path(args.res).stem))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------
def cmd_synth(args: argparse.Namespace) -> int:
    scenario = load_scenario_config(args.config, seed=args.seed) if args.config else ScenarioConfig(
        **({"seed": args.seed} if args.seed is not None else {})
    )
    output = generate(scenario)
    write_scenario(output, args.out, name=Path(args.out).name or "synth")
    print(f"detections={output.detection_count}")
    print(f"gt_boxes={output.ground_truth.considered_count}")
    print(f"dropped_boxes={output.dropped_boxes}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep / compare
# ---------------------------------------------------------------------------
def _replace(model, **update):
    try:
        return type(model).model_validate({**model.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"invalid sweep value: {e.errors()[0]['msg']}") from e


def _apply_param(cfg: TrackerConfig, param: str, value: float) -> TrackerConfig:
    if param == "phi_s":
        return _replace(cfg, structural=_replace(cfg.structural, phi_s=float(value)))
    if param == "gate":
        return _replace(cfg, gate=_replace(cfg.gate, gate=float(value)))
    if param == "lambda":
        return _replace(cfg, costs=_replace(cfg.costs, lambda_appearance=float(value), lambda_motion=1.0 - float(value)))
    if param == "structural":
        return _replace(cfg, structural_enabled=bool(int(value)))
    if param == "window":
        return _replace(cfg, recovery=_replace(cfg.recovery, window=int(value)))
    raise DataError(f"unknown sweep parameter '{param}'")


def score_scenario(scenario: ScenarioConfig, cfg: TrackerConfig) -> MetricsReport:
    """Generate, track and evaluate one synthetic scenario in memory."""
    output = generate(scenario)
    run = track_frames(output.detections, cfg, scenario.image_size, scenario.frame_count,
                       name=f"seed{scenario.seed}")
    return evaluate(output.ground_truth, run.records, frame_count=scenario.frame_count)


def _sweep_point(job: tuple) -> Dict[str, Any]:
    scenario, cfg, param, value = job
    report = score_scenario(scenario, _apply_param(cfg, param, value))
    row: Dict[str, Any] = {"param": param, "value": value, "seed": scenario.seed}
    row.update(report.model_dump())
    return row


def _run_jobs(jobs: List[tuple], workers: int) -> List[Dict[str, Any]]:
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_point(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def _parse_values(raw: str) -> List[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError:
        raise DataError(f"--values must be a comma-separated list of numbers, got {raw!r}") from None


def _seeds(base: int, count: int) -> List[int]:
    return [base + k for k in range(count)]


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_scenario_config(args.scenario)
    cfg = load_tracker_config(args.config)
    values = _parse_values(args.values)
    if not values:
        raise _UsageError("--values is empty")

    jobs = [
        (base.model_copy(update={"seed": seed}), cfg, args.param, value)
        for value in values
        for seed in _seeds(base.seed, args.seeds)
    ]
    log.info("sweeping %s over %d values x %d seeds with %d workers", args.param, len(values), args.seeds, args.workers)
    table = pd.DataFrame(_run_jobs(jobs, args.workers))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        try:
            table.to_csv(args.out, index=False, float_format="%.6f")
        except OSError as e:
            raise TrackerIOError(args.out, f"cannot write: {e}") from e
        log.info("Wrote %d sweep rows to %s", len(table), args.out)
    else:
        sys.stdout.write(table.to_csv(index=False, float_format="%.6f"))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    """Baseline (no structural term) against the full tracker, per seed."""
    base = load_scenario_config(args.scenario)
    cfg = load_tracker_config(args.config)
    jobs = []
    for seed in _seeds(base.seed, args.seeds):
        scenario = base.model_copy(update={"seed": seed})
        jobs.append((scenario, cfg, "structural", 0))
        jobs.append((scenario, cfg, "structural", 1))
    rows = pd.DataFrame(_run_jobs(jobs, args.workers))
    wide = rows.pivot(index="seed", columns="value", values=["MOTA", "IDSW"])
    wide.columns = [f"{metric}_{'structural' if flag else 'baseline'}" for metric, flag in wide.columns]
    wide["MOTA_gain"] = wide["MOTA_structural"] - wide["MOTA_baseline"]
    sys.stdout.write(wide.reset_index().to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n")
    print(f"mean_MOTA_gain={wide['MOTA_gain'].mean():.4f}")
    print(f"IDSW_baseline={int(wide['IDSW_baseline'].sum())}")
    print(f"IDSW_structural={int(wide['IDSW_structural'].sum())}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value tracker config")
    p.add_argument("--no-structural", action="store_true", help="skip the structural cost modification")
    p.add_argument("--no-appearance", action="store_true", help="motion-only costs")
    p.add_argument("--no-recovery", action="store_true", help="keep motion-only predictions for missing targets")
    p.add_argument("--gap-fill", dest="gap_fill", action="store_true",
                   help="offline output: write predicted boxes for gaps bridged by a reacquired track")
    p.add_argument("--phi-s", dest="phi_s", type=float, help="structural admission threshold per pair (px^2)")
    p.add_argument("--gate", type=float, help="maximum admissible pair cost")
    p.add_argument("--window", type=int, help="frames a track may stay unmatched")
    p.add_argument("--min-confidence", dest="min_confidence", type=float, help="drop weaker detections")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="structure-tracker", description="Online multi-object tracking with structural constraints")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    track = sub.add_parser("track", help="track a MOTChallenge det file")
    track.add_argument("--det", help="det.txt path")
    track.add_argument("--out", help="result file to write")
    track.add_argument("--img", help="frame image directory (enables appearance)")
    track.add_argument("--seqinfo", help="seqinfo.ini supplying image size and length")
    track.add_argument("--seed-config", action="store_true", help="print the default config and exit")
    _add_tracker_flags(track)
    track.set_defaults(func=cmd_track)

    ev = sub.add_parser("evaluate", help="CLEAR-MOT metrics of a result file")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--res", required=True)
    ev.add_argument("--iou", type=float, default=0.5)
    ev.add_argument("--format", choices=("table", "kv"), default="table")
    ev.set_defaults(func=cmd_evaluate)

    syn = sub.add_parser("synth", help="generate a synthetic det/gt pair")
    syn.add_argument("--config", help="flat key=value scenario file")
    syn.add_argument("--out", required=True, help="output sequence directory")
    syn.add_argument("--seed", type=int)
    syn.set_defaults(func=cmd_synth)

    sw = sub.add_parser("sweep", help="metrics against one tracker parameter")
    sw.add_argument("--scenario", required=True, help="flat key=value scenario file")
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--seeds", type=int, default=1, help="consecutive seeds from the scenario seed")
    sw.add_argument("--config", help="base tracker config")
    sw.add_argument("--out", help="CSV path; stdout when omitted")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    cmp_ = sub.add_parser("compare", help="baseline against structural tracker across seeds")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--seeds", type=int, default=5)
    cmp_.add_argument("--config", help="base tracker config")
    cmp_.add_argument("--workers", type=int, default=1)
    cmp_.set_defaults(func=cmd_compare)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"structure-tracker: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrackerIOError as e:
        print(f"structure-tracker: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except DataError as e:
        print(f"structure-tracker: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrackerError as e:
        print(f"structure-tracker: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
