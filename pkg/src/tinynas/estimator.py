"""Static cost model for candidate architectures.

Propagates tensor shapes through the stem / stages / head of a candidate and
counts MACs, parameters, int8 peak SRAM and flash, then applies the hard
deployment gates (MAC range, SRAM ceiling).

Conventions, fixed so that the reference oracle and this estimator agree
bit-exactly:
  - spatial dims under stride s: out = ceil(in / s) (SAME padding; padded
    taps count as multiplies)
  - elementwise additions (residual adds) and SE scale multiplications count
    as 1 MAC per element; global average pooling counts 1 MAC per element
  - BN contributes 2 parameters per channel and no MACs (folded at inference)
  - int8: 1 byte per activation element and per weight; a layer's residency
    is input + output bytes, plus any skip source held live across it
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .space import ArchitectureConfig, StageConfig

STEM_CHANNELS = 16
STEM_KERNEL = 3
STEM_STRIDE = 2

DEFAULT_MACS_MIN = 70 * 10**6
DEFAULT_MACS_MAX = 350 * 10**6
DEFAULT_SRAM_LIMIT = 320 * 1024


class DegenerateShapeError(ValueError):
    """An intermediate spatial dimension would reach zero."""


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.channels <= 0:
            raise DegenerateShapeError(f"non-positive tensor shape {self}")

    @property
    def elements(self) -> int:
        return self.height * self.width * self.channels

    @property
    def bytes(self) -> int:
        # int8 activations: 1 byte per element
        return self.elements


@dataclass(frozen=True)
class LayerCost:
    label: str
    macs: int
    params: int
    in_bytes: int
    out_bytes: int
    resident_extra_bytes: int = 0


@dataclass(frozen=True)
class ResourceEstimate:
    total_macs: int
    total_params: int
    peak_sram_bytes: int
    flash_bytes: int
    layers: tuple[LayerCost, ...]

    def to_document(self) -> dict:
        return {
            "total_macs": self.total_macs,
            "total_params": self.total_params,
            "peak_sram_bytes": self.peak_sram_bytes,
            "flash_bytes": self.flash_bytes,
            "layers": [
                {
                    "label": l.label,
                    "macs": l.macs,
                    "params": l.params,
                    "in_bytes": l.in_bytes,
                    "out_bytes": l.out_bytes,
                    "resident_extra_bytes": l.resident_extra_bytes,
                }
                for l in self.layers
            ],
        }


@dataclass(frozen=True)
class ConstraintSet:
    macs_min: int = DEFAULT_MACS_MIN
    macs_max: int = DEFAULT_MACS_MAX
    sram_limit_bytes: int = DEFAULT_SRAM_LIMIT

    def __post_init__(self):
        if self.macs_min > self.macs_max:
            raise ValueError("macs_min must not exceed macs_max")

    def to_document(self) -> dict:
        return {
            "macs_min": self.macs_min,
            "macs_max": self.macs_max,
            "sram_limit_bytes": self.sram_limit_bytes,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ConstraintSet":
        return cls(
            macs_min=doc.get("macs_min", DEFAULT_MACS_MIN),
            macs_max=doc.get("macs_max", DEFAULT_MACS_MAX),
            sram_limit_bytes=doc.get("sram_limit_bytes", DEFAULT_SRAM_LIMIT),
        )


@dataclass(frozen=True)
class GateViolation:
    kind: str  # macs_low | macs_high | sram
    current: int
    bound_low: int | None = None
    bound_high: int | None = None


@dataclass(frozen=True)
class GateVerdict:
    accepted: bool
    violations: tuple[GateViolation, ...] = ()

    def to_document(self) -> dict:
        return {
            "accepted": self.accepted,
            "violations": [
                {
                    "kind": v.kind,
                    "current": v.current,
                    "bound_low": v.bound_low,
                    "bound_high": v.bound_high,
                }
                for v in self.violations
            ],
        }


def _out_spatial(dim: int, stride: int) -> int:
    return math.ceil(dim / stride)


def se_hidden_width(channels: int, ratio: float) -> int:
    return max(1, int(channels * ratio))


def propagate(
    arch: ArchitectureConfig, input_shape: TensorShape
) -> list[tuple[str, TensorShape, TensorShape]]:
    """Shape trace at block granularity: stem, every block, head.

    Stride applies only to the first block of a stage; blocks 2..L run at
    stride 1.
    """
    trace: list[tuple[str, TensorShape, TensorShape]] = []
    cur = input_shape
    out = TensorShape(
        _out_spatial(cur.height, STEM_STRIDE),
        _out_spatial(cur.width, STEM_STRIDE),
        STEM_CHANNELS,
    )
    trace.append(("stem", cur, out))
    cur = out
    for i, stage in enumerate(arch.stages, start=1):
        for j in range(1, stage.layers + 1):
            stride = stage.stride if j == 1 else 1
            out = TensorShape(
                _out_spatial(cur.height, stride),
                _out_spatial(cur.width, stride),
                stage.out_channels,
            )
            trace.append((f"stage{i}.block{j}", cur, out))
            cur = out
    pooled = TensorShape(1, 1, cur.channels)
    trace.append(("head.gap", cur, pooled))
    return trace


def _se_cost(label: str, shape: TensorShape, ratio: float, extra: int) -> LayerCost:
    """Squeeze-and-excitation on ``shape``: GAP, two 1x1 convs, sigmoid scale."""
    c = shape.channels
    hidden = se_hidden_width(c, ratio)
    hw = shape.height * shape.width
    macs = c * hw + c * hidden + hidden * c + c * hw
    params = c * hidden + hidden + hidden * c + c
    return LayerCost(
        label=label,
        macs=macs,
        params=params,
        in_bytes=shape.bytes,
        out_bytes=shape.bytes,
        resident_extra_bytes=extra,
    )


def _block_layers(
    stage: StageConfig,
    stage_idx: int,
    block_idx: int,
    in_shape: TensorShape,
) -> tuple[list[LayerCost], TensorShape]:
    """Cost one conv block (dwsepconv or mbconv) as a list of layers."""
    prefix = f"stage{stage_idx}.block{block_idx}"
    stride = stage.stride if block_idx == 1 else 1
    skip_active = stage.skip and stride == 1 and in_shape.channels == stage.out_channels
    x_bytes = in_shape.bytes if skip_active else 0

    layers: list[LayerCost] = []
    cur = in_shape

    if stage.conv_block == "mbconv":
        expanded = cur.channels * stage.expansion
        out = TensorShape(cur.height, cur.width, expanded)
        layers.append(
            LayerCost(
                label=f"{prefix}.expand",
                macs=cur.channels * expanded * cur.height * cur.width,
                params=cur.channels * expanded + 2 * expanded,
                in_bytes=cur.bytes,
                out_bytes=out.bytes,
            )
        )
        cur = out

    k = stage.kernel
    out = TensorShape(
        _out_spatial(cur.height, stride), _out_spatial(cur.width, stride), cur.channels
    )
    layers.append(
        LayerCost(
            label=f"{prefix}.dwconv",
            macs=k * k * cur.channels * out.height * out.width,
            params=k * k * cur.channels + 2 * cur.channels,
            in_bytes=cur.bytes,
            out_bytes=out.bytes,
            resident_extra_bytes=x_bytes if stage.conv_block == "mbconv" else 0,
        )
    )
    cur = out

    if stage.se_enabled:
        layers.append(_se_cost(f"{prefix}.se", cur, stage.se_ratio, x_bytes))

    out = TensorShape(cur.height, cur.width, stage.out_channels)
    layers.append(
        LayerCost(
            label=f"{prefix}.pwconv",
            macs=cur.channels * stage.out_channels * cur.height * cur.width,
            params=cur.channels * stage.out_channels + 2 * stage.out_channels,
            in_bytes=cur.bytes,
            out_bytes=out.bytes,
            resident_extra_bytes=x_bytes,
        )
    )
    cur = out

    if skip_active:
        layers.append(
            LayerCost(
                label=f"{prefix}.add",
                macs=cur.elements,
                params=0,
                in_bytes=cur.bytes + in_shape.bytes,
                out_bytes=cur.bytes,
            )
        )

    return layers, cur


def estimate(
    arch: ArchitectureConfig, input_shape: TensorShape, num_classes: int = 100
) -> ResourceEstimate:
    """Full per-layer costing of a candidate, stem and head included."""
    layers: list[LayerCost] = []
    cur = input_shape

    stem_out = TensorShape(
        _out_spatial(cur.height, STEM_STRIDE),
        _out_spatial(cur.width, STEM_STRIDE),
        STEM_CHANNELS,
    )
    layers.append(
        LayerCost(
            label="stem",
            macs=STEM_KERNEL * STEM_KERNEL * cur.channels * STEM_CHANNELS
            * stem_out.height * stem_out.width,
            params=STEM_KERNEL * STEM_KERNEL * cur.channels * STEM_CHANNELS
            + 2 * STEM_CHANNELS,
            in_bytes=cur.bytes,
            out_bytes=stem_out.bytes,
        )
    )
    cur = stem_out

    for i, stage in enumerate(arch.stages, start=1):
        for j in range(1, stage.layers + 1):
            block_layers, cur = _block_layers(stage, i, j, cur)
            layers.extend(block_layers)

    pooled = TensorShape(1, 1, cur.channels)
    layers.append(
        LayerCost(
            label="head.gap",
            macs=cur.elements,
            params=0,
            in_bytes=cur.bytes,
            out_bytes=pooled.bytes,
        )
    )
    layers.append(
        LayerCost(
            label="head.classifier",
            macs=cur.channels * num_classes,
            params=cur.channels * num_classes + num_classes,
            in_bytes=pooled.bytes,
            out_bytes=num_classes,
        )
    )

    total_macs = sum(l.macs for l in layers)
    total_params = sum(l.params for l in layers)
    peak = max(l.in_bytes + l.out_bytes + l.resident_extra_bytes for l in layers)
    return ResourceEstimate(
        total_macs=total_macs,
        total_params=total_params,
        peak_sram_bytes=peak,
        flash_bytes=total_params,
        layers=tuple(layers),
    )


def check_constraints(est: ResourceEstimate, limits: ConstraintSet) -> GateVerdict:
    """Hard deployment gates; all violations are reported, bounds inclusive."""
    violations: list[GateViolation] = []
    if est.total_macs < limits.macs_min:
        violations.append(
            GateViolation(
                kind="macs_low",
                current=est.total_macs,
                bound_low=limits.macs_min,
                bound_high=limits.macs_max,
            )
        )
    if est.total_macs > limits.macs_max:
        violations.append(
            GateViolation(
                kind="macs_high",
                current=est.total_macs,
                bound_low=limits.macs_min,
                bound_high=limits.macs_max,
            )
        )
    if est.peak_sram_bytes > limits.sram_limit_bytes:
        violations.append(
            GateViolation(
                kind="sram",
                current=est.peak_sram_bytes,
                bound_high=limits.sram_limit_bytes,
            )
        )
    return GateVerdict(accepted=not violations, violations=tuple(violations))
