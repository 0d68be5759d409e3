# tests/test_cli.py
"""
End-to-end tests for the structure-tracker command line.
"""

import shutil
import tempfile
from pathlib import Path

import pandas as pd
import pytest

# Add parent directory to path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from structure_tracker.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from structure_tracker.motchallenge_io import parse_result_file

pytestmark = pytest.mark.integration

SCENARIO = "target_count=4\nframe_count=20\nimage_width=640\nimage_height=480\njitter_sigma=0.5\nseed=2\n"


# Test Fixtures

@pytest.fixture
def temp_dir():
    """Create temporary directory for CLI inputs and outputs."""
    temp_path = Path(tempfile.mkdtemp())
    yield temp_path
    shutil.rmtree(temp_path)


@pytest.fixture
def scenario_file(temp_dir):
    path = temp_dir / "scenario.env"
    path.write_text(SCENARIO)
    return path


@pytest.fixture
def toy_files(temp_dir):
    """Two ground-truth tracks and a result with one FP, one FN and one identity switch."""
    gt = temp_dir / "gt.txt"
    gt.write_text("".join(
        f"{f},1,0,0,10,10,1,-1,-1\n{f},2,100,0,10,10,1,-1,-1\n" for f in (1, 2, 3)
    ))
    res = temp_dir / "res.txt"
    res.write_text(
        "1,1,0,0,10,10,1,-1,-1,-1\n1,2,100,0,10,10,1,-1,-1,-1\n"
        "2,1,0,0,10,10,1,-1,-1,-1\n2,3,300,300,10,10,1,-1,-1,-1\n"
        "3,1,0,0,10,10,1,-1,-1,-1\n3,4,100,0,10,10,1,-1,-1,-1\n"
    )
    return gt, res


class TestUsage:

    def test_help(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == EXIT_OK

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["track", "--bogus"])
        assert exc.value.code == EXIT_USAGE

    def test_track_without_inputs(self):
        assert main(["track"]) == EXIT_USAGE

    def test_seed_config(self, capsys):
        assert main(["track", "--seed-config"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "gate=" in out and "window=10" in out


class TestTrack:

    def test_missing_det_file(self, temp_dir):
        out = temp_dir / "res.txt"
        assert main(["track", "--det", str(temp_dir / "none.txt"), "--out", str(out)]) == EXIT_IO
        assert not out.exists()

    def test_malformed_det_file(self, temp_dir):
        det = temp_dir / "det.txt"
        det.write_text("1,-1,abc,0,10,10,0.9\n")
        assert main(["track", "--det", str(det), "--out", str(temp_dir / "res.txt")]) == EXIT_DATA

    def test_synth_track_evaluate(self, temp_dir, scenario_file, capsys):
        seq = temp_dir / "seq"
        assert main(["synth", "--config", str(scenario_file), "--out", str(seq)]) == EXIT_OK
        synth_out = capsys.readouterr().out
        assert "gt_boxes=80" in synth_out

        res = temp_dir / "res.txt"
        assert main(["track", "--det", str(seq / "det" / "det.txt"), "--out", str(res)]) == EXIT_OK
        track_out = capsys.readouterr().out
        assert "frames=20" in track_out
        assert "time_total=" in track_out
        assert parse_result_file(res)

        assert main(["evaluate", "--gt", str(seq / "gt" / "gt.txt"), "--res", str(res), "--format", "kv"]) == EXIT_OK
        values = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
        assert float(values["MOTA"]) > 0.5

    def test_flags_reach_config(self, temp_dir, scenario_file):
        seq = temp_dir / "seq"
        main(["synth", "--config", str(scenario_file), "--out", str(seq)])
        res = temp_dir / "res.txt"
        code = main(["track", "--det", str(seq / "det" / "det.txt"), "--out", str(res),
                     "--no-structural", "--no-recovery", "--window", "3"])
        assert code == EXIT_OK

    def test_gap_fill_flag(self, temp_dir, scenario_file):
        seq = temp_dir / "seq"
        main(["synth", "--config", str(scenario_file), "--out", str(seq)])
        res = temp_dir / "res.txt"
        code = main(["track", "--det", str(seq / "det" / "det.txt"), "--out", str(res), "--gap-fill"])
        assert code == EXIT_OK
        assert parse_result_file(res)

    def test_bad_config_value(self, temp_dir, scenario_file):
        seq = temp_dir / "seq"
        main(["synth", "--config", str(scenario_file), "--out", str(seq)])
        cfg = temp_dir / "tracker.env"
        cfg.write_text("gate=-1\n")
        code = main(["track", "--det", str(seq / "det" / "det.txt"), "--out", str(temp_dir / "r.txt"),
                     "--config", str(cfg)])
        assert code == EXIT_DATA


class TestEvaluate:

    def test_golden_toy(self, toy_files, capsys):
        gt, res = toy_files
        assert main(["evaluate", "--gt", str(gt), "--res", str(res), "--format", "kv"]) == EXIT_OK
        values = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
        assert float(values["MOTA"]) == pytest.approx(0.5)
        assert (values["FP"], values["FN"], values["IDSW"]) == ("1", "1", "1")

    def test_table_format(self, toy_files, capsys):
        gt, res = toy_files
        assert main(["evaluate", "--gt", str(gt), "--res", str(res)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split()[:2] == ["res", "0.500"]

    def test_empty_ground_truth(self, temp_dir, toy_files):
        _, res = toy_files
        gt = temp_dir / "empty_gt.txt"
        gt.write_text("")
        assert main(["evaluate", "--gt", str(gt), "--res", str(res)]) == EXIT_DATA


class TestExperiments:

    def test_sweep_writes_csv(self, temp_dir, scenario_file):
        out = temp_dir / "sweep" / "gate.csv"
        code = main(["sweep", "--scenario", str(scenario_file), "--param", "gate",
                     "--values", "0.5,1.0", "--seeds", "2", "--out", str(out)])
        assert code == EXIT_OK
        table = pd.read_csv(out)
        assert len(table) == 4
        assert {"param", "value", "seed", "MOTA", "IDSW"} <= set(table.columns)
        assert sorted(table["seed"].unique()) == [2, 3]

    def test_sweep_bad_values(self, scenario_file):
        code = main(["sweep", "--scenario", str(scenario_file), "--param", "gate", "--values", "a,b"])
        assert code == EXIT_DATA

    def test_compare(self, scenario_file, capsys):
        assert main(["compare", "--scenario", str(scenario_file), "--seeds", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "mean_MOTA_gain=" in out
        assert "IDSW_structural=" in out
