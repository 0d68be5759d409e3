# structure_tracker/__init__.py
from .assignment import AssignmentResult, GateConfig, solve_gated_assignment
from .costs import CostWeights
from .recovery import RecoveryConfig
from .structural import StructuralConfig
from .tracker import OnlineTracker, SequenceRun, TrackerConfig, run_sequence, track_frames

__all__ = [
    "AssignmentResult",
    "CostWeights",
    "GateConfig",
    "OnlineTracker",
    "RecoveryConfig",
    "SequenceRun",
    "StructuralConfig",
    "TrackerConfig",
    "run_sequence",
    "solve_gated_assignment",
    "track_frames",
]
