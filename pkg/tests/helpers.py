"""Shared test helpers for the orchestrator suite."""
import json
from pathlib import Path

from tinynas.space import ArchitectureConfig, StageConfig


def make_stage(**overrides) -> StageConfig:
    base = dict(
        out_channels=16,
        kernel=3,
        stride=2,
        expansion=3,
        se_enabled=False,
        se_ratio=None,
        conv_block="dwsepconv",
        skip=False,
        activation="relu6",
        layers=1,
    )
    base.update(overrides)
    return StageConfig(**base)


def make_arch(*stages, candidate_id="", source="manual") -> ArchitectureConfig:
    return ArchitectureConfig(
        stages=tuple(stages), candidate_id=candidate_id, source=source
    )


def sample_gated_architecture(space, constraints, rng, max_tries=20_000):
    """Random architecture that passes the static resource gates."""
    from tinynas.estimator import TensorShape, check_constraints, estimate
    from tinynas.space import sample_architecture

    shape = TensorShape(space.input_resolution, space.input_resolution, 3)
    for _ in range(max_tries):
        arch = sample_architecture(space, rng)
        est = estimate(arch, shape, num_classes=space.num_classes)
        if check_constraints(est, constraints).accepted:
            return arch
    raise AssertionError("could not sample an in-budget architecture")


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)
