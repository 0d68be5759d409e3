# structure_tracker/structural.py
"""
Structural constraints between targets.

Relative displacements are taken about the mean of the points that take part in a
pairing, which keeps every quantity here invariant to a global translation of the
detections and, independently, of the targets (camera ego-motion).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, PositiveFloat
from scipy.optimize import linear_sum_assignment

from structure_tracker.core_model import Point2, centers_array
from structure_tracker.errors import CardinalityError

log = logging.getLogger(__name__)


class PairId(NamedTuple):
    """(detection index, trajectory index) into the current frame's cost matrix."""
    detection: int
    trajectory: int


class StructuralConfig(BaseModel):
    phi_s: Optional[PositiveFloat] = Field(
        None, description="Admission threshold per pair in squared pixels; None resolves to phi_s_fraction * diagonal^2."
    )
    phi_s_fraction: PositiveFloat = 0.005
    max_set_size: Optional[int] = Field(None, ge=1, description="Cap on |match set|; None means number of targets.")

    def resolved(self, image_size: Tuple[float, float]) -> StructuralConfig:
        if self.phi_s is not None:
            return self
        width, height = image_size
        return self.model_copy(update={"phi_s": self.phi_s_fraction * (width * width + height * height)})

    def admission_threshold(self, size_after: int) -> float:
        """Threshold for a match set that would hold `size_after` pairs."""
        if self.phi_s is None:
            raise ValueError("phi_s is unresolved; call resolved(image_size) first")
        return float(self.phi_s) * size_after


@dataclass(frozen=True)
class DisplacementFrame:
    points: np.ndarray
    centroid: Point2
    displacements: np.ndarray


@dataclass
class MatchSet:
    """Pairs accumulated around a seed; structural_costs[k] is the set cost after the k-th admission."""
    seed: PairId
    pairs: List[PairId] = field(default_factory=list)
    structural_costs: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.pairs:
            self.pairs = [self.seed]
            self.structural_costs = [0.0]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def detection_indices(self) -> List[int]:
        return [p.detection for p in self.pairs]

    @property
    def trajectory_indices(self) -> List[int]:
        return [p.trajectory for p in self.pairs]


@dataclass(frozen=True)
class FixedPairAssignment:
    pairs: List[PairId]
    cost: float


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=float).reshape(-1, 2)
    return centers_array(points)


def relative_displacements(points: Sequence[Point2] | np.ndarray) -> DisplacementFrame:
    """Displacement of each point from the mean of the set."""
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("relative_displacements needs at least one point")
    centroid = pts.mean(axis=0)
    return DisplacementFrame(pts, Point2.from_array(centroid), pts - centroid)


def structural_cost(dets, trajs, pairing: Sequence[Tuple[int, int]]) -> float:
    """
    Sum over pairs of ||delta d_p - delta T_q||^2, with displacements taken over exactly
    the paired detections and the paired targets.
    """
    if not pairing:
        return 0.0
    d = _as_points(dets)
    t = _as_points(trajs)
    p = np.array([pair[0] for pair in pairing], dtype=int)
    q = np.array([pair[1] for pair in pairing], dtype=int)
    if len(set(p.tolist())) != len(p) or len(set(q.tolist())) != len(q):
        raise ValueError("pairing must be one-to-one")
    delta_d = d[p] - d[p].mean(axis=0)
    delta_t = t[q] - t[q].mean(axis=0)
    return float(np.sum((delta_d - delta_t) ** 2))


def predict_candidate_location(match_set: MatchSet, dets, trajs, target_index: int) -> Point2:
    """Closed-form minimizer: T_j + mean over the set of (d_p - T_q)."""
    if target_index in match_set.trajectory_indices:
        raise ValueError(f"target {target_index} is already in the match set")
    d = _as_points(dets)
    t = _as_points(trajs)
    offsets = d[match_set.detection_indices] - t[match_set.trajectory_indices]
    return Point2.from_array(t[target_index] + offsets.mean(axis=0))


def heuristic_search(seed: PairId | Tuple[int, int], dets, trajs, cfg: StructuralConfig) -> MatchSet:
    """
    Grow a one-to-one match set around `seed`.

    Each round predicts every free target from the current set, snaps it to the nearest
    free detection (ties -> lowest detection index), and admits the candidate with the
    lowest resulting set cost if that cost is below phi_s * (|set| + 1).
    """
    d = _as_points(dets)
    t = _as_points(trajs)
    m, n = len(d), len(t)
    seed = PairId(*seed)
    if not (0 <= seed.detection < m and 0 <= seed.trajectory < n):
        raise IndexError(f"seed {seed} outside a {m}x{n} frame")

    result = MatchSet(seed)
    det_free = np.ones(m, dtype=bool)
    trk_free = np.ones(n, dtype=bool)
    det_free[seed.detection] = False
    trk_free[seed.trajectory] = False

    offsets = [d[seed.detection] - t[seed.trajectory]]
    current = 0.0
    limit = min(cfg.max_set_size or n, n, m)

    while len(result) < limit:
        cand_t = np.flatnonzero(trk_free)
        cand_d = np.flatnonzero(det_free)
        if len(cand_t) == 0 or len(cand_d) == 0:
            break

        off = np.asarray(offsets)
        k = len(off)
        mean = off.mean(axis=0)
        predicted = t[cand_t] + mean
        gaps = predicted[:, None, :] - d[cand_d][None, :, :]
        nearest = cand_d[np.argmin(np.hypot(gaps[..., 0], gaps[..., 1]), axis=1)]

        # adding offset o to k centered offsets raises the sum of squares by k/(k+1)*||o - mean||^2
        deviation = (d[nearest] - t[cand_t]) - mean
        cost = current + (k / (k + 1.0)) * np.einsum("ij,ij->i", deviation, deviation)
        best = int(np.argmin(cost))
        best_cost = float(cost[best])
        if not best_cost < cfg.admission_threshold(k + 1):
            break

        pair = PairId(int(nearest[best]), int(cand_t[best]))
        result.pairs.append(pair)
        result.structural_costs.append(best_cost)
        offsets.append(d[pair.detection] - t[pair.trajectory])
        det_free[pair.detection] = False
        trk_free[pair.trajectory] = False
        current = best_cost

    return result


def fixed_pair_global_assignment(dets, trajs, fixed: PairId | Tuple[int, int]) -> FixedPairAssignment:
    """
    Minimum structural-cost one-to-one assignment containing `fixed`, for equal counts.
    Displacements are taken about the centroid of all detections / all targets.
    """
    d = _as_points(dets)
    t = _as_points(trajs)
    if len(d) != len(t):
        raise CardinalityError(len(d), len(t))
    fixed = PairId(*fixed)
    if not (0 <= fixed.detection < len(d) and 0 <= fixed.trajectory < len(t)):
        raise IndexError(f"fixed pair {fixed} outside a {len(d)}x{len(t)} frame")

    delta_d = d - d.mean(axis=0)
    delta_t = t - t.mean(axis=0)
    diff = delta_d[:, None, :] - delta_t[None, :, :]
    pair_costs = np.einsum("ijk,ijk->ij", diff, diff)

    rows = [i for i in range(len(d)) if i != fixed.detection]
    cols = [j for j in range(len(t)) if j != fixed.trajectory]
    pairs = [fixed]
    if rows:
        sub = pair_costs[np.ix_(rows, cols)]
        r, c = linear_sum_assignment(sub)
        pairs.extend(PairId(rows[a], cols[b]) for a, b in zip(r, c))
    pairs.sort()
    cost = float(sum(pair_costs[p.detection, p.trajectory] for p in pairs))
    return FixedPairAssignment(pairs, cost)


def modify_cost_matrix(raw: np.ndarray, match_sets: Mapping[Tuple[int, int], MatchSet]) -> np.ndarray:
    """
    C_st(i, j) = n_max / n_ij^2 * sum over the set of C_init(p, q), n_max the largest set size.
    Entries without a match set keep their raw cost.
    """
    raw = np.asarray(raw, dtype=float)
    modified = raw.copy()
    if not match_sets:
        return modified
    n_max = max(len(ms) for ms in match_sets.values())
    for (i, j), ms in match_sets.items():
        n = len(ms)
        total = float(raw[ms.detection_indices, ms.trajectory_indices].sum())
        modified[i, j] = n_max / (n * n) * total
    return modified


def match_sets_for_gated_pairs(
    raw: np.ndarray, gate: float, dets, trajs, cfg: StructuralConfig
) -> Dict[Tuple[int, int], MatchSet]:
    """Run the search for every pair whose raw cost is below the gate, in row-major order."""
    seeds = np.argwhere(np.asarray(raw) < gate)
    sets: Dict[Tuple[int, int], MatchSet] = {}
    for i, j in seeds:
        sets[(int(i), int(j))] = heuristic_search(PairId(int(i), int(j)), dets, trajs, cfg)
    if sets:
        sizes = [len(ms) for ms in sets.values()]
        log.debug("structural search: %d seeds, set size max=%d mean=%.2f",
                  len(sets), max(sizes), sum(sizes) / len(sizes))
    return sets


def enumerate_match_sets(
    dets, trajs, seed: PairId, phi_total: Callable[[int], float], max_size: Optional[int] = None
) -> Iterator[Tuple[List[Tuple[int, int]], float]]:
    """
    Every one-to-one pairing containing `seed` whose structural cost is below phi_total(size).
    Exponential; intended for small verification instances.
    """
    d = _as_points(dets)
    t = _as_points(trajs)
    other_d = [i for i in range(len(d)) if i != seed.detection]
    other_t = [j for j in range(len(t)) if j != seed.trajectory]
    limit = min(max_size or len(t), len(d), len(t))
    for size in range(0, limit):
        for dets_subset in itertools.combinations(other_d, size):
            for trks_perm in itertools.permutations(other_t, size):
                pairing = [tuple(seed)] + list(zip(dets_subset, trks_perm))
                cost = structural_cost(d, t, pairing)
                if cost < phi_total(len(pairing)):
                    yield pairing, cost
