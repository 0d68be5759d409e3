# tests/test_assignment.py
"""
Tests for gated assignment and its brute-force oracle.
"""

from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

# Add parent directory to path for imports
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from structure_tracker.assignment import GateConfig, brute_force_assignment, solve_gated_assignment
from structure_tracker.errors import InstanceTooLargeError


def _partition_complete(result, m, n):
    rows = [i for i, _ in result.matches] + result.unmatched_detections
    cols = [j for _, j in result.matches] + result.unmatched_trajectories
    return sorted(rows) == list(range(m)) and sorted(cols) == list(range(n))


class TestGateConfig:

    def test_gate_positive(self):
        with pytest.raises(ValidationError):
            GateConfig(gate=0.0)


class TestSolveGatedAssignment:

    def test_diagonal(self):
        result = solve_gated_assignment([[1, 2], [2, 1]], GateConfig(gate=10))
        assert result.matches == [(0, 0), (1, 1)]
        assert result.total_cost == pytest.approx(2.0)

    def test_everything_above_gate(self):
        result = solve_gated_assignment(np.full((3, 2), 5.0), GateConfig(gate=1.0))
        assert result.matches == []
        assert result.unmatched_detections == [0, 1, 2]
        assert result.unmatched_trajectories == [0, 1]

    def test_pair_at_gate_never_matched(self):
        result = solve_gated_assignment([[1.0]], GateConfig(gate=1.0))
        assert result.matches == []

    def test_empty_matrix(self):
        result = solve_gated_assignment(np.zeros((0, 3)), GateConfig())
        assert result.unmatched_trajectories == [0, 1, 2]
        assert result.total_cost == 0.0

    def test_conflicting_rows(self):
        costs = np.array([[0.1, 2.0], [0.2, 2.0]])
        result = solve_gated_assignment(costs, GateConfig(gate=1.0))
        assert result.matches == [(0, 0)]
        assert result.unmatched_detections == [1]
        assert result.objective == pytest.approx(0.1 + 1.0)
        assert _partition_complete(result, 2, 2)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            solve_gated_assignment([[np.nan]], GateConfig())

    def test_equals_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            costs = rng.uniform(0, 1.2, size=(m, n))
            gate = GateConfig(gate=float(rng.uniform(0.3, 1.2)))
            fast = solve_gated_assignment(costs, gate)
            slow = brute_force_assignment(costs, gate)
            assert fast.objective == pytest.approx(slow.objective, abs=1e-12)
            assert fast.total_cost == pytest.approx(slow.total_cost, abs=1e-12)
            assert _partition_complete(fast, m, n)

    def test_five_by_seven(self):
        rng = np.random.default_rng(1)
        costs = rng.uniform(0, 1, size=(5, 7))
        gate = GateConfig(gate=0.8)
        assert solve_gated_assignment(costs, gate).matches == brute_force_assignment(costs, gate).matches

    def test_uniform_shift_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            costs = rng.uniform(0, 1, size=(4, 5))
            base = solve_gated_assignment(costs, GateConfig(gate=0.7))
            shifted = solve_gated_assignment(costs + 3.0, GateConfig(gate=3.7))
            assert base.matches == shifted.matches


class TestBruteForce:

    def test_single_entry(self):
        assert brute_force_assignment([[0.2]], GateConfig(gate=1.0)).matches == [(0, 0)]
        assert brute_force_assignment([[2.0]], GateConfig(gate=1.0)).matches == []

    def test_not_worse_than_identity(self):
        rng = np.random.default_rng(3)
        costs = rng.uniform(0, 0.5, size=(4, 4))
        result = brute_force_assignment(costs, GateConfig(gate=1.0))
        assert result.total_cost <= float(np.trace(costs)) + 1e-12

    def test_tie_goes_to_lexicographic_order(self):
        result = brute_force_assignment(np.full((2, 2), 0.5), GateConfig(gate=1.0))
        assert result.matches == [(0, 0), (1, 1)]

    def test_refuses_large_instances(self):
        with pytest.raises(InstanceTooLargeError):
            brute_force_assignment(np.zeros((9, 9)), GateConfig())
