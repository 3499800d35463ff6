"""Training-side evaluator for the tinynas search orchestrator."""

from .data import DatasetMissingError, load_datasets, synthetic_dataset
from .kd import alpha_sequence, alpha_step, combined_loss, kd_loss, softened_probs
from .model import (
    CandidateNet,
    InvalidArchitectureError,
    build_model,
    parameter_count,
    se_hidden_width,
)
from .phases import (
    PHASE_DEFAULTS,
    PhaseSpec,
    TeacherMissingError,
    TrainOutcome,
    evaluate_accuracy,
    lr_for_epoch,
    run_phase,
    train_candidate,
)
from .serve import fake_response, handle_line, serve, surrogate_noise

__all__ = [
    "CandidateNet",
    "DatasetMissingError",
    "InvalidArchitectureError",
    "PHASE_DEFAULTS",
    "PhaseSpec",
    "TeacherMissingError",
    "TrainOutcome",
    "alpha_sequence",
    "alpha_step",
    "build_model",
    "combined_loss",
    "evaluate_accuracy",
    "fake_response",
    "handle_line",
    "kd_loss",
    "load_datasets",
    "lr_for_epoch",
    "parameter_count",
    "run_phase",
    "se_hidden_width",
    "serve",
    "softened_probs",
    "surrogate_noise",
    "synthetic_dataset",
    "train_candidate",
]
