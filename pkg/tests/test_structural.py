# tests/test_structural.py
"""
Tests for relative displacements, the structural cost, match-set search and the
structure-modified cost matrix.
"""

import itertools
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

# Add parent directory to path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from structure_tracker.core_model import Point2
from structure_tracker.errors import CardinalityError
from structure_tracker.structural import (
    MatchSet,
    PairId,
    StructuralConfig,
    enumerate_match_sets,
    fixed_pair_global_assignment,
    heuristic_search,
    match_sets_for_gated_pairs,
    modify_cost_matrix,
    predict_candidate_location,
    relative_displacements,
    structural_cost,
)


@pytest.fixture
def cfg():
    return StructuralConfig(phi_s=50.0)


def _scene(rng, n_targets, n_outliers, shift=None):
    """Targets, and detections = shifted targets (shuffled) plus outliers. Returns (dets, trajs, truth)."""
    trajs = rng.uniform(0, 500, size=(n_targets, 2))
    shift = rng.uniform(-80, 80, size=2) if shift is None else np.asarray(shift)
    outliers = rng.uniform(0, 500, size=(n_outliers, 2))
    stacked = np.vstack([trajs + shift, outliers])
    order = rng.permutation(len(stacked))
    dets = stacked[order]
    truth = {int(np.flatnonzero(order == j)[0]): j for j in range(n_targets)}
    return dets, trajs, truth


class TestDisplacements:

    def test_displacements_sum_to_zero(self):
        frame = relative_displacements([Point2(0, 0), Point2(4, 0), Point2(2, 6)])
        assert frame.centroid == Point2(2, 2)
        assert np.allclose(frame.displacements.sum(axis=0), 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            relative_displacements([])

    def test_structural_cost_zero_under_translation(self):
        rng = np.random.default_rng(0)
        trajs = rng.uniform(0, 100, size=(5, 2))
        dets = trajs + np.array([13.0, -7.0])
        assert structural_cost(dets, trajs, [(i, i) for i in range(5)]) == pytest.approx(0.0, abs=1e-18)

    def test_structural_cost_hand_computed(self):
        dets = np.array([[0.0, 0.0], [10.0, 0.0]])
        trajs = np.array([[0.0, 0.0], [12.0, 0.0]])
        # displacements (-5, 5) vs (-6, 6)
        assert structural_cost(dets, trajs, [(0, 0), (1, 1)]) == pytest.approx(2.0)

    def test_structural_cost_rejects_duplicates(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ValueError):
            structural_cost(pts, pts, [(0, 0), (0, 1)])

    def test_structural_cost_translation_invariant(self):
        rng = np.random.default_rng(1)
        dets = rng.uniform(0, 300, size=(6, 2))
        trajs = rng.uniform(0, 300, size=(6, 2))
        pairing = [(0, 3), (2, 1), (5, 0), (4, 4)]
        base = structural_cost(dets, trajs, pairing)
        moved = structural_cost(dets + [400.0, -90.0], trajs + [-33.0, 12.5], pairing)
        assert moved == pytest.approx(base, abs=1e-9)


class TestCandidateLocation:

    def test_matches_numeric_minimizer(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            size = int(rng.integers(1, 7))
            trajs = rng.uniform(0, 200, size=(size + 1, 2))
            dets = trajs[:size] + rng.normal(0, 5, size=(size, 2)) + rng.uniform(-30, 30, size=2)
            match_set = MatchSet(PairId(0, 0), [PairId(i, i) for i in range(size)], [0.0] * size)
            closed = predict_candidate_location(match_set, dets, trajs, size).as_array()

            pairing = [(i, i) for i in range(size + 1)]

            def objective(x):
                return structural_cost(np.vstack([dets, x]), trajs, pairing)

            numeric = minimize(objective, trajs[size], method="BFGS", options={"gtol": 1e-10}).x
            assert np.allclose(closed, numeric, atol=1e-4)

            eps = 1e-5
            grad = [(objective(closed + eps * e) - objective(closed - eps * e)) / (2 * eps) for e in np.eye(2)]
            assert np.linalg.norm(grad) < 1e-6

    def test_rejects_target_in_set(self):
        pts = np.zeros((2, 2))
        with pytest.raises(ValueError):
            predict_candidate_location(MatchSet(PairId(0, 0)), pts, pts, 0)


class TestHeuristicSearch:

    def test_recovers_full_set_under_camera_translation(self, cfg):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n_targets = int(rng.integers(2, 7))
            n_outliers = int(rng.integers(0, 3))
            dets, trajs, truth = _scene(rng, n_targets, n_outliers)
            for det_idx, trk_idx in truth.items():
                found = heuristic_search(PairId(det_idx, trk_idx), dets, trajs, cfg)
                assert {(p.detection, p.trajectory) for p in found.pairs} == set(truth.items())

    def test_agrees_with_exhaustive_enumeration(self, cfg):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n_targets = int(rng.integers(2, 6))
            dets, trajs, truth = _scene(rng, n_targets, int(rng.integers(0, 3)))
            seed = PairId(*next(iter(truth.items())))
            candidates = list(enumerate_match_sets(dets, trajs, seed, cfg.admission_threshold))
            largest = max(len(p) for p, _ in candidates)
            best = min((c, sorted(p)) for p, c in candidates if len(p) == largest)
            found = heuristic_search(seed, dets, trajs, cfg)
            assert sorted(tuple(p) for p in found.pairs) == best[1]

    def test_admission_threshold(self):
        dets = np.array([[0.0, 0.0], [10.0, 0.0]])
        trajs = np.array([[0.0, 0.0], [14.0, 0.0]])
        # adding the second pair costs 1/2 * 4^2 = 8
        assert len(heuristic_search((0, 0), dets, trajs, StructuralConfig(phi_s=4.01))) == 2
        assert len(heuristic_search((0, 0), dets, trajs, StructuralConfig(phi_s=4.0))) == 1

    def test_costs_are_monotone_and_exact(self, cfg):
        rng = np.random.default_rng(5)
        trajs = rng.uniform(0, 300, size=(6, 2))
        dets = trajs + rng.normal(0, 2, size=(6, 2)) + [20.0, 5.0]
        found = heuristic_search((0, 0), dets, trajs, cfg)
        assert found.structural_costs == sorted(found.structural_costs)
        assert found.structural_costs[-1] == pytest.approx(structural_cost(dets, trajs, found.pairs))

    def test_max_set_size(self):
        trajs = np.arange(10, dtype=float).reshape(5, 2) * 30
        found = heuristic_search((0, 0), trajs, trajs, StructuralConfig(phi_s=1.0, max_set_size=3))
        assert len(found) == 3

    def test_seed_out_of_range(self, cfg):
        with pytest.raises(IndexError):
            heuristic_search((3, 0), np.zeros((2, 2)), np.zeros((2, 2)), cfg)

    def test_unresolved_threshold(self):
        with pytest.raises(ValueError):
            heuristic_search((0, 0), np.zeros((2, 2)), np.ones((2, 2)), StructuralConfig())

    def test_resolved_phi_s(self):
        assert StructuralConfig().resolved((30, 40)).phi_s == pytest.approx(0.005 * 2500)


class TestFixedPairGlobalAssignment:

    def test_matches_permutation_enumeration(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            dets = rng.uniform(0, 100, size=(n, 2))
            trajs = rng.uniform(0, 100, size=(n, 2))
            fixed = PairId(int(rng.integers(n)), int(rng.integers(n)))
            best = min(
                structural_cost(dets, trajs, list(zip(range(n), perm)))
                for perm in itertools.permutations(range(n))
                if perm[fixed.detection] == fixed.trajectory
            )
            result = fixed_pair_global_assignment(dets, trajs, fixed)
            assert fixed in result.pairs
            assert result.cost == pytest.approx(best, abs=1e-9)

    def test_unequal_counts(self):
        with pytest.raises(CardinalityError) as exc:
            fixed_pair_global_assignment(np.zeros((3, 2)), np.zeros((2, 2)), (0, 0))
        assert "heuristic_search" in str(exc.value)


class TestModifiedCosts:

    def test_formula(self):
        raw = np.array([[0.1, 0.9], [0.8, 0.3]])
        sets = {
            (0, 0): MatchSet(PairId(0, 0), [PairId(0, 0), PairId(1, 1)], [0.0, 1.0]),
            (1, 1): MatchSet(PairId(1, 1)),
        }
        modified = modify_cost_matrix(raw, sets)
        assert modified[0, 0] == pytest.approx(2 / 4 * (0.1 + 0.3))
        assert modified[1, 1] == pytest.approx(2 / 1 * 0.3)
        assert modified[0, 1] == raw[0, 1]

    def test_no_sets_is_identity(self):
        raw = np.array([[0.2]])
        assert np.array_equal(modify_cost_matrix(raw, {}), raw)

    def test_only_gated_pairs_searched(self, cfg):
        raw = np.array([[0.1, 2.0], [2.0, 0.2]])
        pts = np.array([[0.0, 0.0], [50.0, 0.0]])
        sets = match_sets_for_gated_pairs(raw, 1.0, pts, pts, cfg)
        assert sorted(sets) == [(0, 0), (1, 1)]

    def test_translation_invariance(self, cfg):
        rng = np.random.default_rng(7)
        for _ in range(20):
            dets, trajs, _ = _scene(rng, 6, 2)
            dets = dets + rng.normal(0, 1.0, size=dets.shape)
            raw = rng.uniform(0, 1.5, size=(len(dets), len(trajs)))
            base_sets = match_sets_for_gated_pairs(raw, 1.0, dets, trajs, cfg)
            moved_sets = match_sets_for_gated_pairs(raw, 1.0, dets + [250.0, -40.0], trajs + [-75.0, 310.0], cfg)
            assert {k: v.pairs for k, v in base_sets.items()} == {k: v.pairs for k, v in moved_sets.items()}
            assert np.allclose(modify_cost_matrix(raw, base_sets), modify_cost_matrix(raw, moved_sets), atol=1e-9)
