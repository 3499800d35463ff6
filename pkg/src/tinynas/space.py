"""Hierarchical ConvNet search space: stage/architecture types, validation,
canonical hashing, and parsing of candidate documents.

The space is a fixed skeleton of N sequential stages. Every block inside a
stage shares one configuration, so a candidate is fully described by N stage
records. Candidates arrive as JSON documents (typically produced by an LLM)
and are validated field-by-field against the choice lists of the space.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Any

CONV_BLOCKS = ("dwsepconv", "mbconv")
ACTIVATIONS = ("relu6", "leakyrelu", "swish")

# Stage document keys, in canonical (declared) order.
STAGE_KEYS = (
    "out_channels",
    "kernel",
    "stride",
    "expansion",
    "se",
    "se_ratio",
    "conv_block",
    "skip",
    "activation",
    "layers",
)


class ArchitectureParseError(ValueError):
    """Base error for candidate documents that cannot be turned into a config.

    ``kind`` is one of ``malformed-document``, ``schema-violation`` or
    ``space-violation``; ``violations`` carries per-field details when the
    document was structurally sound but out of space.
    """

    kind = "malformed-document"

    def __init__(self, message: str, violations: list["Violation"] | None = None):
        super().__init__(message)
        self.violations = violations or []


class MalformedDocumentError(ArchitectureParseError):
    kind = "malformed-document"


class SchemaViolationError(ArchitectureParseError):
    kind = "schema-violation"


class SpaceViolationError(ArchitectureParseError):
    kind = "space-violation"


@dataclass(frozen=True)
class Violation:
    """One validation failure: which field, what it was, what was allowed."""

    field: str
    value: Any
    allowed: tuple
    stage: int | None = None
    kind: str = "choice"

    def describe(self) -> str:
        where = f"stage {self.stage}: " if self.stage is not None else ""
        if self.kind == "stage_count":
            return f"{where}expected {self.allowed[0]} stages, got {self.value}"
        allowed = ", ".join(str(a) for a in self.allowed)
        return f"{where}{self.field}={self.value} is not in {{{allowed}}}"


@dataclass(frozen=True)
class SearchSpace:
    """Choice lists for every searchable stage parameter.

    The defaults reproduce the MCU-oriented space this project searches:
    8 channel widths, 3 kernels, 2 strides, 3 expansions, SE on/off with two
    ratios, 2 block types, skip on/off, 3 activations and 5 depth choices,
    i.e. 17,280 distinct configurations per stage (se_ratio is a dependent
    parameter and does not enter that count).
    """

    stage_count: int = 5
    out_channel_choices: tuple[int, ...] = (16, 24, 32, 48, 64, 96, 128, 160)
    kernel_choices: tuple[int, ...] = (3, 5, 7)
    stride_choices: tuple[int, ...] = (1, 2)
    expansion_choices: tuple[int, ...] = (3, 4, 6)
    se_enable_choices: tuple[bool, ...] = (True, False)
    se_ratio_choices: tuple[float, ...] = (0.25, 0.5)
    conv_block_choices: tuple[str, ...] = CONV_BLOCKS
    skip_choices: tuple[bool, ...] = (True, False)
    activation_choices: tuple[str, ...] = ACTIVATIONS
    layers_choices: tuple[int, ...] = (1, 2, 3, 4, 6)
    input_resolution: int = 160
    num_classes: int = 100

    def __post_init__(self):
        if self.stage_count < 1:
            raise ValueError("stage_count must be positive")
        for name in (
            "out_channel_choices",
            "kernel_choices",
            "stride_choices",
            "expansion_choices",
            "se_enable_choices",
            "se_ratio_choices",
            "conv_block_choices",
            "skip_choices",
            "activation_choices",
            "layers_choices",
        ):
            choices = getattr(self, name)
            if not choices:
                raise ValueError(f"{name} must be non-empty")
            if len(set(choices)) != len(choices):
                raise ValueError(f"{name} contains duplicates")
        if any(k <= 0 or k % 2 == 0 for k in self.kernel_choices):
            raise ValueError("kernel_choices must be odd positive integers")
        if any(s not in (1, 2) for s in self.stride_choices):
            raise ValueError("stride_choices must be a subset of {1, 2}")
        if any(not (0.0 < r <= 1.0) for r in self.se_ratio_choices):
            raise ValueError("se_ratio_choices must lie in (0, 1]")
        if self.input_resolution < 1 or self.num_classes < 1:
            raise ValueError("input_resolution and num_classes must be positive")

    def to_document(self) -> dict:
        return {
            "stage_count": self.stage_count,
            "out_channels": list(self.out_channel_choices),
            "kernel": list(self.kernel_choices),
            "stride": list(self.stride_choices),
            "expansion": list(self.expansion_choices),
            "se": list(self.se_enable_choices),
            "se_ratio": list(self.se_ratio_choices),
            "conv_block": list(self.conv_block_choices),
            "skip": list(self.skip_choices),
            "activation": list(self.activation_choices),
            "layers": list(self.layers_choices),
            "input_resolution": self.input_resolution,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "SearchSpace":
        return cls(
            stage_count=doc["stage_count"],
            out_channel_choices=tuple(doc["out_channels"]),
            kernel_choices=tuple(doc["kernel"]),
            stride_choices=tuple(doc["stride"]),
            expansion_choices=tuple(doc["expansion"]),
            se_enable_choices=tuple(doc["se"]),
            se_ratio_choices=tuple(doc["se_ratio"]),
            conv_block_choices=tuple(doc["conv_block"]),
            skip_choices=tuple(doc["skip"]),
            activation_choices=tuple(doc["activation"]),
            layers_choices=tuple(doc["layers"]),
            input_resolution=doc["input_resolution"],
            num_classes=doc["num_classes"],
        )


@dataclass(frozen=True)
class StageConfig:
    """One stage's shared block configuration.

    ``expansion`` is always stored, even for dwsepconv stages where it has no
    effect, so that LLM-emitted records round-trip unchanged. ``se_ratio`` is
    canonically None whenever the SE block is disabled.
    """

    out_channels: int
    kernel: int
    stride: int
    expansion: int
    se_enabled: bool
    se_ratio: float | None
    conv_block: str
    skip: bool
    activation: str
    layers: int

    def canonical(self) -> "StageConfig":
        if not self.se_enabled and self.se_ratio is not None:
            return replace(self, se_ratio=None)
        return self

    def to_document(self) -> dict:
        doc = {
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "expansion": self.expansion,
            "se": self.se_enabled,
            "conv_block": self.conv_block,
            "skip": self.skip,
            "activation": self.activation,
            "layers": self.layers,
        }
        if self.se_ratio is not None:
            doc["se_ratio"] = self.se_ratio
        # re-emit in canonical key order
        return {k: doc[k] for k in STAGE_KEYS if k in doc}


@dataclass(frozen=True)
class ArchitectureConfig:
    """A full candidate: an ordered list of stage configurations."""

    stages: tuple[StageConfig, ...]
    candidate_id: str = ""
    source: str = "manual"  # llm | replay | manual

    def to_document(self) -> dict:
        return {"stages": [s.to_document() for s in self.stages]}


def validate_stage(stage: StageConfig, space: SearchSpace, index: int | None = None) -> list[Violation]:
    """Check every stage field against the space's choice lists.

    Returns the (possibly empty) list of violations; an empty list means ok.
    ``se_ratio`` is only checked when the SE block is enabled.
    """
    checks = [
        ("out_channels", stage.out_channels, space.out_channel_choices),
        ("kernel", stage.kernel, space.kernel_choices),
        ("stride", stage.stride, space.stride_choices),
        ("expansion", stage.expansion, space.expansion_choices),
        ("se", stage.se_enabled, space.se_enable_choices),
        ("conv_block", stage.conv_block, space.conv_block_choices),
        ("skip", stage.skip, space.skip_choices),
        ("activation", stage.activation, space.activation_choices),
        ("layers", stage.layers, space.layers_choices),
    ]
    violations = [
        Violation(field=name, value=value, allowed=tuple(allowed), stage=index)
        for name, value, allowed in checks
        if value not in allowed
    ]
    if stage.se_enabled:
        if stage.se_ratio is None or stage.se_ratio not in space.se_ratio_choices:
            violations.append(
                Violation(
                    field="se_ratio",
                    value=stage.se_ratio,
                    allowed=tuple(space.se_ratio_choices),
                    stage=index,
                )
            )
    return violations


def validate_architecture(arch: ArchitectureConfig, space: SearchSpace) -> list[Violation]:
    """Validate stage count and every stage; violations carry stage indices."""
    if len(arch.stages) != space.stage_count:
        return [
            Violation(
                field="stage_count",
                value=len(arch.stages),
                allowed=(space.stage_count,),
                kind="stage_count",
            )
        ]
    violations: list[Violation] = []
    for i, stage in enumerate(arch.stages):
        violations.extend(validate_stage(stage, space, index=i))
    return violations


def count_stage_configs(space: SearchSpace) -> int:
    """Number of distinct configurations of a single stage.

    Product over the nine independent choice lists; se_ratio is a dependent
    parameter (only meaningful when SE is enabled) and is excluded.
    """
    return (
        len(space.kernel_choices)
        * len(space.stride_choices)
        * len(space.se_enable_choices)
        * len(space.conv_block_choices)
        * len(space.skip_choices)
        * len(space.expansion_choices)
        * len(space.activation_choices)
        * len(space.layers_choices)
        * len(space.out_channel_choices)
    )


def serialize_architecture(arch: ArchitectureConfig) -> str:
    """Canonical JSON for a candidate: fixed key order, no whitespace.

    Excludes candidate_id and source; equal architectures serialize equally.
    """
    canonical = [s.canonical().to_document() for s in arch.stages]
    return json.dumps({"stages": canonical}, separators=(",", ":"))


def canonical_hash(arch: ArchitectureConfig) -> str:
    """SHA-256 hex digest of the canonical serialization (64 hex chars)."""
    return hashlib.sha256(serialize_architecture(arch).encode("utf-8")).hexdigest()


_STAGE_FIELD_TYPES = {
    "out_channels": int,
    "kernel": int,
    "stride": int,
    "expansion": int,
    "se": bool,
    "se_ratio": (int, float),
    "conv_block": str,
    "skip": bool,
    "activation": str,
    "layers": int,
}
_REQUIRED_STAGE_KEYS = frozenset(k for k in STAGE_KEYS if k != "se_ratio")


def _parse_stage(doc: Any, index: int) -> StageConfig:
    if not isinstance(doc, dict):
        raise SchemaViolationError(f"stages[{index}] is not an object")
    unknown = set(doc) - set(STAGE_KEYS)
    if unknown:
        raise SchemaViolationError(
            f"stages[{index}] has unknown keys: {', '.join(sorted(unknown))}"
        )
    missing = _REQUIRED_STAGE_KEYS - set(doc)
    if missing:
        raise SchemaViolationError(
            f"stages[{index}] is missing keys: {', '.join(sorted(missing))}"
        )
    for key, expected in _STAGE_FIELD_TYPES.items():
        if key not in doc:
            continue
        value = doc[key]
        if expected is int and isinstance(value, bool):
            raise SchemaViolationError(f"stages[{index}].{key} must be an integer")
        if expected is bool and not isinstance(value, bool):
            raise SchemaViolationError(f"stages[{index}].{key} must be a boolean")
        if not isinstance(value, expected):
            raise SchemaViolationError(f"stages[{index}].{key} has the wrong type")
    return StageConfig(
        out_channels=doc["out_channels"],
        kernel=doc["kernel"],
        stride=doc["stride"],
        expansion=doc["expansion"],
        se_enabled=doc["se"],
        se_ratio=doc.get("se_ratio"),
        conv_block=doc["conv_block"].lower() if isinstance(doc["conv_block"], str) else doc["conv_block"],
        skip=doc["skip"],
        activation=doc["activation"].lower() if isinstance(doc["activation"], str) else doc["activation"],
        layers=doc["layers"],
    ).canonical()


def parse_architecture(
    text: str,
    space: SearchSpace,
    candidate_id: str = "",
    source: str = "manual",
) -> ArchitectureConfig:
    """Parse and validate a candidate architecture document.

    Unknown keys are a hard error so that hallucinated fields surface as
    rejection feedback instead of being dropped silently. Raises
    ArchitectureParseError subclasses; space violations carry the full
    violation list.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocumentError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolationError("document is not a JSON object")
    unknown = set(doc) - {"stages"}
    if unknown:
        raise SchemaViolationError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    if "stages" not in doc:
        raise SchemaViolationError('missing "stages" key')
    if not isinstance(doc["stages"], list):
        raise SchemaViolationError('"stages" must be an array')
    stages = tuple(_parse_stage(s, i) for i, s in enumerate(doc["stages"]))
    arch = ArchitectureConfig(stages=stages, candidate_id=candidate_id, source=source)
    violations = validate_architecture(arch, space)
    if violations:
        detail = "; ".join(v.describe() for v in violations)
        raise SpaceViolationError(f"out-of-space values: {detail}", violations)
    return arch


def sample_stage(space: SearchSpace, rng: random.Random) -> StageConfig:
    """Draw one stage uniformly from the space (canonical form)."""
    se_enabled = rng.choice(space.se_enable_choices)
    return StageConfig(
        out_channels=rng.choice(space.out_channel_choices),
        kernel=rng.choice(space.kernel_choices),
        stride=rng.choice(space.stride_choices),
        expansion=rng.choice(space.expansion_choices),
        se_enabled=se_enabled,
        se_ratio=rng.choice(space.se_ratio_choices) if se_enabled else None,
        conv_block=rng.choice(space.conv_block_choices),
        skip=rng.choice(space.skip_choices),
        activation=rng.choice(space.activation_choices),
        layers=rng.choice(space.layers_choices),
    )


def sample_architecture(
    space: SearchSpace, rng: random.Random, candidate_id: str = "", source: str = "manual"
) -> ArchitectureConfig:
    """Draw one full candidate uniformly from the space."""
    stages = tuple(sample_stage(space, rng) for _ in range(space.stage_count))
    return ArchitectureConfig(stages=stages, candidate_id=candidate_id, source=source)
