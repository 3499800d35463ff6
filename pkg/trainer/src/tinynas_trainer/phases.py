"""Training phases behind the evaluator protocol.

The orchestrator's evaluation request carries the phase hyperparameters
(epochs, batch size, optimizer, LR schedule, augmentation, KD settings);
this module merges them over its own defaults, trains the candidate, and
reports held-out top-1 accuracy in percent.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from . import kd as kd_mod
from .data import DatasetMissingError, load_datasets
from .model import InvalidArchitectureError, build_model

PHASE_DEFAULTS: dict[str, dict] = {
    "mini": {
        "epochs": 30,
        "batch_size": 128,
        "lr_schedule": {
            "kind": "step",
            "initial_lr": 0.5,
            "gamma": 0.1,
            "step_epochs": 10,
            "warmup_epochs": 10,
        },
        "optimizer": {"momentum": 0.9, "nesterov": True, "weight_decay": 1e-4},
        "augmentation": {"autoaugment": True, "mixup_alpha": 0.0},
        "kd": None,
    },
    "full": {
        "epochs": 120,
        "batch_size": 128,
        "lr_schedule": {
            "kind": "warmup_cosine",
            "initial_lr": 0.0,
            "peak_lr": 0.5,
            "warmup_epochs": 20,
        },
        "optimizer": {"momentum": 0.9, "nesterov": True, "weight_decay": 1e-4},
        "augmentation": {"autoaugment": True, "mixup_alpha": 0.2},
        "kd": None,
    },
    "kd": {
        "epochs": 50,
        "batch_size": 128,
        "lr_schedule": {
            "kind": "step",
            "initial_lr": 0.05,
            "gamma": 0.1,
            "step_epochs": 20,
            "warmup_epochs": 0,
        },
        "optimizer": {"momentum": 0.9, "nesterov": True, "weight_decay": 1e-4},
        "augmentation": {"autoaugment": False, "mixup_alpha": 0.0},
        "kd": {
            "teacher": "vit_b16",
            "temperature": 10.0,
            "alpha0": 0.4,
            "alpha_final": 0.8,
        },
    },
}


class TeacherMissingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhaseSpec:
    phase: str
    epochs: int
    batch_size: int
    optimizer: dict
    lr_schedule: dict
    augmentation: dict
    kd: dict | None
    dataset: dict | None = None

    @classmethod
    def from_hparams(cls, phase: str, hparams: dict | None = None) -> "PhaseSpec":
        if phase not in PHASE_DEFAULTS:
            raise ValueError(f"unknown phase {phase!r}")
        merged = dict(PHASE_DEFAULTS[phase])
        for key, value in (hparams or {}).items():
            if key in merged or key == "dataset":
                merged[key] = value
        return cls(
            phase=phase,
            epochs=merged["epochs"],
            batch_size=merged["batch_size"],
            optimizer=merged["optimizer"],
            lr_schedule=merged["lr_schedule"],
            augmentation=merged["augmentation"],
            kd=merged["kd"],
            dataset=merged.get("dataset"),
        )


def lr_for_epoch(schedule: dict, epoch: int, total_epochs: int) -> float:
    """Learning rate for a 1-based epoch under a step or warmup-cosine plan."""
    kind = schedule["kind"]
    warmup = schedule.get("warmup_epochs", 0)
    if kind == "step":
        peak = schedule["initial_lr"]
        if warmup and epoch <= warmup:
            return peak * epoch / warmup
        decays = (epoch - warmup - 1) // schedule["step_epochs"] if epoch > warmup else 0
        return peak * schedule["gamma"] ** decays
    if kind == "warmup_cosine":
        peak = schedule["peak_lr"]
        if warmup and epoch <= warmup:
            return peak * epoch / warmup
        span = max(1, total_epochs - warmup)
        progress = (epoch - warmup) / span
        return 0.5 * peak * (1.0 + math.cos(math.pi * progress))
    raise ValueError(f"unknown LR schedule kind {kind!r}")


def _augment(images: torch.Tensor, spec: dict, generator: torch.Generator) -> torch.Tensor:
    """Random crop (4px padding) + horizontal flip when augmentation is on."""
    if not spec.get("autoaugment"):
        return images
    pad = 4
    n, _, h, w = images.shape
    padded = F.pad(images, (pad, pad, pad, pad), mode="reflect")
    dy = torch.randint(0, 2 * pad + 1, (1,), generator=generator).item()
    dx = torch.randint(0, 2 * pad + 1, (1,), generator=generator).item()
    images = padded[:, :, dy : dy + h, dx : dx + w]
    if torch.rand(1, generator=generator).item() < 0.5:
        images = images.flip(-1)
    return images


def _load_teacher(kd_spec: dict, num_classes: int):
    identifier = kd_spec.get("teacher", "vit_b16")
    if identifier == "self":
        return "self"
    if identifier == "vit_b16":
        try:
            from torchvision.models import ViT_B_16_Weights, vit_b_16

            teacher = vit_b_16(weights=ViT_B_16_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise TeacherMissingError(f"cannot load vit_b16 weights: {exc}") from exc
        teacher.eval()
        for p in teacher.parameters():
            p.requires_grad_(False)
        return teacher
    raise TeacherMissingError(f"unknown teacher {identifier!r}")


def _teacher_logits(teacher, model, images: torch.Tensor) -> torch.Tensor:
    if teacher == "self":
        return model(images).detach()
    resized = F.interpolate(
        images, size=(224, 224), mode="bilinear", align_corners=False
    )
    with torch.no_grad():
        return teacher(resized)


@dataclass
class TrainOutcome:
    test_accuracy: float
    wall_seconds: float
    epochs_run: int
    alpha_trajectory: list[float] = field(default_factory=list)
    lr_trajectory: list[float] = field(default_factory=list)


def evaluate_accuracy(model, dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in percent on a dataset."""
    model.eval()
    correct = total = 0
    with torch.no_grad():
        for images, labels in DataLoader(dataset, batch_size=batch_size):
            predicted = model(images).argmax(dim=-1)
            correct += (predicted == labels).sum().item()
            total += labels.numel()
    return 100.0 * correct / total


def train_candidate(arch: dict, spec: PhaseSpec, seed: int) -> TrainOutcome:
    start = time.monotonic()
    torch.manual_seed(seed)
    train_set, test_set, num_classes = load_datasets(spec.dataset, seed)
    model = build_model(arch, num_classes)

    teacher = _load_teacher(spec.kd, num_classes) if spec.kd else None
    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=spec.lr_schedule.get("initial_lr", spec.lr_schedule.get("peak_lr", 0.1)),
        momentum=spec.optimizer["momentum"],
        nesterov=spec.optimizer["nesterov"],
        weight_decay=spec.optimizer["weight_decay"],
    )
    loader_gen = torch.Generator().manual_seed(seed)
    aug_gen = torch.Generator().manual_seed(seed + 1)
    mixup_gen = torch.Generator().manual_seed(seed + 2)
    loader = DataLoader(
        train_set, batch_size=spec.batch_size, shuffle=True, generator=loader_gen
    )

    alpha = spec.kd["alpha0"] if spec.kd else None
    outcome = TrainOutcome(test_accuracy=0.0, wall_seconds=0.0, epochs_run=0)
    mixup_alpha = spec.augmentation.get("mixup_alpha", 0.0)

    for epoch in range(1, spec.epochs + 1):
        lr = lr_for_epoch(spec.lr_schedule, epoch, spec.epochs)
        for group in optimizer.param_groups:
            group["lr"] = lr
        outcome.lr_trajectory.append(lr)
        if spec.kd:
            alpha = kd_mod.alpha_step(alpha, spec.kd["alpha_final"], epoch, spec.epochs)
            outcome.alpha_trajectory.append(alpha)

        model.train()
        for images, labels in loader:
            images = _augment(images, spec.augmentation, aug_gen)
            if mixup_alpha > 0.0:
                lam = torch.distributions.Beta(mixup_alpha, mixup_alpha).sample().item()
                perm = torch.randperm(images.size(0), generator=mixup_gen)
                images = lam * images + (1.0 - lam) * images[perm]
                logits = model(images)
                ce = lam * F.cross_entropy(logits, labels) + (1.0 - lam) * F.cross_entropy(
                    logits, labels[perm]
                )
            else:
                logits = model(images)
                ce = F.cross_entropy(logits, labels)
            if spec.kd:
                teacher_logits = _teacher_logits(teacher, model, images)
                kd_term = kd_mod.kd_loss(
                    teacher_logits, logits, spec.kd["temperature"]
                ).mean()
                loss = kd_mod.combined_loss(ce, kd_term, alpha)
            else:
                loss = ce
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        outcome.epochs_run = epoch

    outcome.test_accuracy = evaluate_accuracy(model, test_set)
    outcome.wall_seconds = time.monotonic() - start
    return outcome


def run_phase(request: dict) -> dict:
    """Evaluator-protocol entry point: one request document in, one response
    document out. Failures are reported per-request, never raised."""
    rid = request.get("id")
    try:
        arch = request["arch"]
        phase = request["phase"]
        seed = int(request.get("seed", 0))
        spec = PhaseSpec.from_hparams(phase, request.get("hparams"))
        outcome = train_candidate(arch, spec, seed)
    except (
        KeyError,
        TypeError,
        ValueError,
        InvalidArchitectureError,
        DatasetMissingError,
        TeacherMissingError,
    ) as exc:
        return {"id": rid, "status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
    return {
        "id": rid,
        "status": "ok",
        "test_accuracy": outcome.test_accuracy,
        "wall_seconds": outcome.wall_seconds,
    }
