# structure_tracker/assignment.py
"""
Per-frame data association with explicit non-assignment.

The cost matrix is padded with one dummy column per detection and one dummy row per
trajectory. Leaving a detection unmatched costs gate/2, leaving a trajectory unmatched
costs gate/2, so a real pair is only worth matching when its cost is below the gate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment

from structure_tracker.errors import InstanceTooLargeError

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 8


class GateConfig(BaseModel):
    gate: float = Field(1.0, gt=0.0, description="Maximum admissible pair cost, in cost-matrix units.")


@dataclass
class AssignmentResult:
    matches: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_detections: List[int] = field(default_factory=list)
    unmatched_trajectories: List[int] = field(default_factory=list)
    total_cost: float = 0.0
    objective: float = 0.0

    @property
    def matched_trajectory_for(self) -> dict[int, int]:
        """trajectory index -> detection index"""
        return {j: i for i, j in self.matches}


def _result(costs: np.ndarray, matches: List[Tuple[int, int]], gate: float) -> AssignmentResult:
    m, n = costs.shape
    matches = sorted(matches)
    rows = {i for i, _ in matches}
    cols = {j for _, j in matches}
    unmatched_rows = [i for i in range(m) if i not in rows]
    unmatched_cols = [j for j in range(n) if j not in cols]
    total = float(sum(costs[i, j] for i, j in matches))
    objective = total + 0.5 * gate * (len(unmatched_rows) + len(unmatched_cols))
    return AssignmentResult(matches, unmatched_rows, unmatched_cols, total, objective)


def _checked(costs) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {costs.shape}")
    if costs.size and not np.isfinite(costs).all():
        raise ValueError("cost matrix must be finite")
    return costs


def solve_gated_assignment(costs, gate: GateConfig) -> AssignmentResult:
    """
    Minimum-objective one-to-one matching where any row or column may stay unmatched.
    A pair with cost >= gate is never matched.
    """
    costs = _checked(costs)
    theta = float(gate.gate)
    m, n = costs.shape
    if m == 0 or n == 0:
        return _result(costs, [], theta)

    size = m + n
    augmented = np.full((size, size), np.inf)
    augmented[:m, :n] = np.where(costs < theta, costs, np.inf)
    augmented[:m, n:][np.diag_indices(m)] = theta / 2.0
    augmented[m:, :n][np.diag_indices(n)] = theta / 2.0
    augmented[m:, n:] = 0.0

    rows, cols = linear_sum_assignment(augmented)
    matches = [(int(i), int(j)) for i, j in zip(rows, cols) if i < m and j < n]
    result = _result(costs, matches, theta)
    log.debug("assignment %dx%d: %d matched, %d/%d unmatched, cost=%.4f",
              m, n, len(matches), len(result.unmatched_detections), len(result.unmatched_trajectories),
              result.total_cost)
    return result


def brute_force_assignment(costs, gate: GateConfig) -> AssignmentResult:
    """
    Exhaustive search over every gated partial matching. Ties on the objective go to the
    lexicographically smallest sorted pair list. Refuses instances whose smaller side
    exceeds BRUTE_FORCE_LIMIT.
    """
    costs = _checked(costs)
    theta = float(gate.gate)
    m, n = costs.shape
    if min(m, n) > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(
            f"brute force refused for a {m}x{n} matrix (limit {BRUTE_FORCE_LIMIT} on the smaller side)"
        )

    best: Optional[Tuple[float, List[Tuple[int, int]]]] = None
    used = [False] * n
    chosen: List[Tuple[int, int]] = []

    def visit(row: int, matched_cost: float) -> None:
        nonlocal best
        if row == m:
            k = len(chosen)
            objective = matched_cost + 0.5 * theta * (m + n - 2 * k)
            pairs = sorted(chosen)
            if best is None or objective < best[0] - 1e-12 or (abs(objective - best[0]) <= 1e-12 and pairs < best[1]):
                best = (objective, pairs)
            return
        visit(row + 1, matched_cost)
        for j in range(n):
            if used[j] or not costs[row, j] < theta:
                continue
            used[j] = True
            chosen.append((row, j))
            visit(row + 1, matched_cost + float(costs[row, j]))
            chosen.pop()
            used[j] = False

    visit(0, 0.0)
    return _result(costs, best[1] if best else [], theta)
