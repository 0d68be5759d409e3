# tests/test_recovery.py
"""
Tests for missing-target recovery and the track lifecycle.
"""

from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

# Add parent directory to path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from structure_tracker.assignment import AssignmentResult
from structure_tracker.core_model import BBox, Detection, Point2, TrackState, Trajectory
from structure_tracker.recovery import (
    MissingTarget,
    RecoveryConfig,
    predict_missing_targets,
    recovery_objective,
    step_lifecycle,
)


def _missing(track_id, previous, prediction, age=1):
    return MissingTarget(track_id, Point2(*prediction), Point2(*previous), age)


def _random_instance(rng, n_matched, n_missing):
    before = rng.uniform(0, 400, size=(n_matched, 2))
    now = before + rng.normal(0, 6, size=2) + rng.normal(0, 2, size=(n_matched, 2))
    matched = [(Point2(*a), Point2(*b)) for a, b in zip(now, before)]
    prev = rng.uniform(0, 400, size=(n_missing, 2))
    guess = prev + rng.normal(0, 10, size=(n_missing, 2))
    missing = [_missing(100 + k, prev[k], guess[k]) for k in range(n_missing)]
    return matched, missing


def _detection(frame, x, y=50.0):
    return Detection(frame, BBox(x - 5, y - 10, 10, 20), 0.9)


def _assignment(matches, n_dets, n_trajs):
    rows = {i for i, _ in matches}
    cols = {j for _, j in matches}
    return AssignmentResult(
        sorted(matches),
        [i for i in range(n_dets) if i not in rows],
        [j for j in range(n_trajs) if j not in cols],
    )


class TestPredictMissingTargets:

    def test_no_structure_returns_motion_guess(self):
        out = predict_missing_targets([], [_missing(1, (10, 10), (14, 9))])
        assert out[0].x == pytest.approx(14.0)
        assert out[0].y == pytest.approx(9.0)

    def test_consistent_translation(self):
        v = np.array([7.0, -3.0])
        before = np.array([[0.0, 0.0], [50.0, 10.0], [20.0, 80.0]])
        matched = [(Point2(*(b + v)), Point2(*b)) for b in before]
        prev = np.array([100.0, 100.0])
        missing = [_missing(9, prev, prev + v)]
        out = predict_missing_targets(matched, missing)
        assert out[0].as_array() == pytest.approx(prev + v, abs=1e-9)
        assert recovery_objective(matched, missing, out) == pytest.approx(0.0, abs=1e-12)

    def test_structure_pulls_toward_common_motion(self):
        # matched targets all move +10 in x; motion guess says the missing one stood still
        before = [(0.0, 0.0), (30.0, 0.0), (60.0, 0.0)]
        matched = [(Point2(x + 10, y), Point2(x, y)) for x, y in before]
        out = predict_missing_targets(matched, [_missing(5, (90, 0), (90, 0))])
        assert 90.0 < out[0].x < 100.0

    def test_matches_numeric_minimizer(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            matched, missing = _random_instance(rng, int(rng.integers(0, 5)), int(rng.integers(1, 4)))
            closed = np.array([[p.x, p.y] for p in predict_missing_targets(matched, missing)])
            start = np.array([[m.motion_prediction.x, m.motion_prediction.y] for m in missing])

            def objective(flat):
                return recovery_objective(matched, missing, flat.reshape(-1, 2))

            numeric = minimize(objective, start.ravel(), method="BFGS", options={"gtol": 1e-10}).x
            assert np.allclose(closed.ravel(), numeric, atol=1e-4)
            assert recovery_objective(matched, missing, closed) <= recovery_objective(matched, missing, start) + 1e-9

            eps = 1e-5
            flat = closed.ravel()
            grad = [(objective(flat + eps * e) - objective(flat - eps * e)) / (2 * eps) for e in np.eye(len(flat))]
            assert np.linalg.norm(grad) < 1e-6

    def test_translation_equivariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            matched, missing = _random_instance(rng, 3, 2)
            v = rng.uniform(-200, 200, size=2)
            base = predict_missing_targets(matched, missing)
            moved_matched = [(now.translated(*v), before) for now, before in matched]
            moved_missing = [
                MissingTarget(m.track_id, m.motion_prediction.translated(*v), m.previous, m.age)
                for m in missing
            ]
            moved = predict_missing_targets(moved_matched, moved_missing)
            for a, b in zip(base, moved):
                assert b.as_array() == pytest.approx(a.as_array() + v, abs=1e-9)

    def test_empty_missing(self):
        assert predict_missing_targets([(Point2(0, 0), Point2(0, 0))], []) == []

    def test_age_must_be_positive(self):
        with pytest.raises(ValueError):
            _missing(1, (0, 0), (0, 0), age=0)


class TestStepLifecycle:

    def test_first_frame_spawns(self):
        dets = [_detection(1, 10), _detection(1, 50), _detection(1, 90)]
        result = step_lifecycle([], _assignment([], 3, 0), dets, RecoveryConfig(), frame=1, next_track_id=1)
        assert [t.track_id for t in result.spawned] == [1, 2, 3]
        assert result.next_track_id == 4
        assert len(result.emitted) == 3

    def test_all_matched(self):
        tracks = [Trajectory(1), Trajectory(2)]
        for k, t in enumerate(tracks):
            t.append(TrackState(t.track_id, Point2(10 + 40 * k, 50), BBox(5 + 40 * k, 40, 10, 20), 1, True))
        dets = [_detection(2, 12), _detection(2, 52)]
        result = step_lifecycle(tracks, _assignment([(0, 0), (1, 1)], 2, 2), dets, RecoveryConfig(),
                                frame=2, next_track_id=3)
        assert result.spawned == [] and result.terminated == []
        assert all(t.miss_count == 0 for t in result.active)
        assert [s.matched for s in result.emitted] == [True, True]

    def _replay(self, absent_frames, cfg=RecoveryConfig(window=10), total=None):
        """One target at x=50 that vanishes for the given frames. Returns emitted and reacquired states per frame."""
        total = total or max(absent_frames, default=0) + 2
        tracks, next_id, emitted, reacquired = [], 1, {}, {}
        for frame in range(1, total + 1):
            dets = [] if frame in absent_frames else [_detection(frame, 50)]
            matches = [(0, 0)] if dets and tracks else []
            result = step_lifecycle(tracks, _assignment(matches, len(dets), len(tracks)), dets, cfg,
                                    frame=frame, next_track_id=next_id,
                                    predicted={t.track_id: Point2(50, 50) for t in tracks})
            tracks, next_id = result.active, result.next_track_id
            emitted[frame] = result.emitted
            reacquired[frame] = result.reacquired
        return emitted, tracks, reacquired

    def test_short_gap_keeps_identity_and_reports_gap(self):
        emitted, tracks, reacquired = self._replay({3, 4, 5}, total=7)
        assert [t.track_id for t in tracks] == [1]
        assert tracks[0].miss_count == 0
        assert emitted[4] == []
        # emitted states stay in their own frame; the gap is reported separately
        assert [(s.frame, s.matched) for s in emitted[6]] == [(6, True)]
        assert [(s.frame, s.matched) for s in reacquired[6][1]] == [(3, False), (4, False), (5, False)]
        assert all(states == {} for frame, states in reacquired.items() if frame != 6)

    def test_gap_fill_disabled(self):
        emitted, _, reacquired = self._replay({3, 4}, cfg=RecoveryConfig(window=10, enabled=False), total=5)
        assert [(s.frame, s.matched) for s in emitted[5]] == [(5, True)]
        assert reacquired[5] == {}

    def test_terminated_after_window(self):
        cfg = RecoveryConfig(window=10)
        tracks = [Trajectory(1)]
        tracks[0].append(TrackState(1, Point2(50, 50), BBox(45, 40, 10, 20), 1, True))
        terminated_at = None
        for frame in range(2, 14):
            result = step_lifecycle(tracks, _assignment([], 0, len(tracks)), [], cfg,
                                    frame=frame, next_track_id=2)
            if result.terminated:
                terminated_at = frame
                break
            tracks = result.active
            assert result.emitted == []
        assert terminated_at == 1 + 10 + 1

    def test_ids_never_reused(self):
        emitted, tracks, _ = self._replay(set(range(2, 13)), total=14)
        ids = sorted({s.track_id for states in emitted.values() for s in states})
        assert ids == [1, 2]
        assert [t.track_id for t in tracks] == [2]
