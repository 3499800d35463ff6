"""LLM-guided neural architecture search for microcontroller-class targets."""

__version__ = "0.1.0"

from .estimator import ConstraintSet, ResourceEstimate, TensorShape, check_constraints, estimate
from .pareto import CandidateRecord, ParetoFront, dominates
from .space import (
    ArchitectureConfig,
    SearchSpace,
    StageConfig,
    canonical_hash,
    count_stage_configs,
    parse_architecture,
    validate_architecture,
    validate_stage,
)

__all__ = [
    "ArchitectureConfig",
    "CandidateRecord",
    "ConstraintSet",
    "ParetoFront",
    "ResourceEstimate",
    "SearchSpace",
    "StageConfig",
    "TensorShape",
    "canonical_hash",
    "check_constraints",
    "count_stage_configs",
    "dominates",
    "estimate",
    "parse_architecture",
    "validate_architecture",
    "validate_stage",
]
