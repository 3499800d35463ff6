"""Build a trainable network from an architecture document.

The structure mirrors the orchestrator's static cost model layer-for-layer:
same stem and head, stride applied to the first block of a stage only,
residual add only when skip is requested, the stride is 1, and the channel
count is preserved; MBConv is a pointwise expansion followed by the
depthwise-separable operations with the inner skip suppressed. With those
conventions the framework-reported parameter count equals the estimator's
total_params exactly (bias-free convolutions + BatchNorm everywhere except
the biased 1x1 SE convolutions and the biased classifier).
"""
from __future__ import annotations

import torch
from torch import nn

STEM_CHANNELS = 16
STEM_KERNEL = 3
STEM_STRIDE = 2

ACTIVATIONS = {
    "relu6": nn.ReLU6,
    "leakyrelu": nn.LeakyReLU,
    "swish": nn.SiLU,
}

STAGE_FIELDS = (
    "out_channels",
    "kernel",
    "stride",
    "expansion",
    "se",
    "conv_block",
    "skip",
    "activation",
    "layers",
)


class InvalidArchitectureError(ValueError):
    pass


def se_hidden_width(channels: int, ratio: float) -> int:
    return max(1, int(channels * ratio))


def _check_stage(stage: dict, index: int) -> None:
    for key in STAGE_FIELDS:
        if key not in stage:
            raise InvalidArchitectureError(f"stage {index}: missing field {key!r}")
    if stage["activation"] not in ACTIVATIONS:
        raise InvalidArchitectureError(
            f"stage {index}: unknown activation {stage['activation']!r}"
        )
    if stage["conv_block"] not in ("dwsepconv", "mbconv"):
        raise InvalidArchitectureError(
            f"stage {index}: unknown conv_block {stage['conv_block']!r}"
        )
    for key in ("out_channels", "kernel", "stride", "expansion", "layers"):
        if not isinstance(stage[key], int) or stage[key] < 1:
            raise InvalidArchitectureError(f"stage {index}: bad {key}: {stage[key]!r}")
    if stage["kernel"] % 2 == 0:
        raise InvalidArchitectureError(f"stage {index}: kernel must be odd")
    if stage["se"] and not stage.get("se_ratio"):
        raise InvalidArchitectureError(f"stage {index}: se enabled without se_ratio")


class SqueezeExcite(nn.Module):
    """GAP -> 1x1 reduce -> ReLU -> 1x1 expand -> sigmoid -> channel scale."""

    def __init__(self, channels: int, ratio: float):
        super().__init__()
        hidden = se_hidden_width(channels, ratio)
        self.reduce = nn.Conv2d(channels, hidden, 1, bias=True)
        self.expand = nn.Conv2d(hidden, channels, 1, bias=True)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scale = x.mean(dim=(2, 3), keepdim=True)
        scale = torch.sigmoid(self.expand(self.act(self.reduce(scale))))
        return x * scale


class ConvBlock(nn.Module):
    """One dwsepconv or mbconv block; ``stride`` is the effective stride of
    this block (the stage stride in block 1, otherwise 1)."""

    def __init__(self, in_channels: int, stage: dict, stride: int):
        super().__init__()
        out_channels = stage["out_channels"]
        act = ACTIVATIONS[stage["activation"]]
        self.skip_active = bool(stage["skip"]) and stride == 1 and in_channels == out_channels

        ops: list[nn.Module] = []
        width = in_channels
        if stage["conv_block"] == "mbconv":
            expanded = in_channels * stage["expansion"]
            ops += [
                nn.Conv2d(in_channels, expanded, 1, bias=False),
                nn.BatchNorm2d(expanded),
                act(),
            ]
            width = expanded
        kernel = stage["kernel"]
        ops += [
            nn.Conv2d(
                width,
                width,
                kernel,
                stride=stride,
                padding=kernel // 2,
                groups=width,
                bias=False,
            ),
            nn.BatchNorm2d(width),
            act(),
        ]
        if stage["se"]:
            ops.append(SqueezeExcite(width, stage["se_ratio"]))
        # linear bottleneck: no activation after the projection
        ops += [
            nn.Conv2d(width, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
        ]
        self.ops = nn.Sequential(*ops)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.ops(x)
        if self.skip_active:
            y = y + x
        return y


class CandidateNet(nn.Module):
    def __init__(self, arch: dict, num_classes: int):
        super().__init__()
        if not isinstance(arch, dict) or "stages" not in arch:
            raise InvalidArchitectureError("architecture document needs a 'stages' list")
        stages = arch["stages"]
        if not isinstance(stages, list) or not stages:
            raise InvalidArchitectureError("'stages' must be a non-empty list")
        if num_classes < 2:
            raise InvalidArchitectureError("num_classes must be at least 2")

        self.stem = nn.Sequential(
            nn.Conv2d(
                3,
                STEM_CHANNELS,
                STEM_KERNEL,
                stride=STEM_STRIDE,
                padding=STEM_KERNEL // 2,
                bias=False,
            ),
            nn.BatchNorm2d(STEM_CHANNELS),
            nn.ReLU6(),
        )
        blocks: list[nn.Module] = []
        channels = STEM_CHANNELS
        for index, stage in enumerate(stages, start=1):
            _check_stage(stage, index)
            for block_idx in range(1, stage["layers"] + 1):
                stride = stage["stride"] if block_idx == 1 else 1
                blocks.append(ConvBlock(channels, stage, stride))
                channels = stage["out_channels"]
        self.blocks = nn.Sequential(*blocks)
        self.classifier = nn.Linear(channels, num_classes, bias=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.blocks(self.stem(x))
        x = x.mean(dim=(2, 3))
        return self.classifier(x)


def build_model(arch: dict, num_classes: int) -> CandidateNet:
    return CandidateNet(arch, num_classes)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
