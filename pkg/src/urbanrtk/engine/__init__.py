from .config import EngineConfig
from .dd import DdEntry, DdSet, NotEnoughSignals, quality_score, screen_observables, select_pivot_and_form_dd
from .exclusion import DepthExceeded, scored_exclusion
from .pipeline import EpochSolution, RtkEngine, SolutionKind
from .srif import JointPosterior, NavState, NumericalDegeneracy, float_update, time_update

__all__ = [
    "EngineConfig", "DdEntry", "DdSet", "NotEnoughSignals", "quality_score", "screen_observables",
    "select_pivot_and_form_dd", "DepthExceeded", "scored_exclusion", "EpochSolution", "RtkEngine",
    "SolutionKind", "JointPosterior", "NavState", "NumericalDegeneracy", "float_update", "time_update",
]
