"""Torch implementations of the distillation kernels.

These mirror the orchestrator's numeric definitions and are validated against
the shared test-vector file emitted by ``tinynas kd-vectors``: softened
softmax, per-sample T^2-scaled KL loss, the CE/KD mix, and the adaptive alpha
recurrence.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F


def softened_probs(logits: torch.Tensor, temperature: float) -> torch.Tensor:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return F.softmax(logits / temperature, dim=-1)


def kd_loss(
    teacher_logits: torch.Tensor, student_logits: torch.Tensor, temperature: float
) -> torch.Tensor:
    """Per-sample T^2 * KL(softened teacher || softened student).

    Works on 1-D logits or a batch; reduces over the last dimension only.
    Clamped at zero: rounding can push the KL of near-identical distributions
    a hair negative.
    """
    if teacher_logits.shape != student_logits.shape:
        raise ValueError("teacher and student logit shapes differ")
    log_p_t = F.log_softmax(teacher_logits / temperature, dim=-1)
    log_p_s = F.log_softmax(student_logits / temperature, dim=-1)
    kl = (log_p_t.exp() * (log_p_t - log_p_s)).sum(dim=-1)
    return (temperature * temperature * kl).clamp_min(0.0)


def combined_loss(
    ce: torch.Tensor, kd: torch.Tensor, alpha: float
) -> torch.Tensor:
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * ce + (1.0 - alpha) * kd


def alpha_step(alpha: float, alpha_final: float, epoch: int, num_epochs: int) -> float:
    """alpha += (alpha_final - alpha) * epoch/num_epochs, applied in order
    for epochs 1..num_epochs; the last step lands exactly on alpha_final."""
    if not (1 <= epoch <= num_epochs):
        raise ValueError(f"epoch {epoch} out of range 1..{num_epochs}")
    return alpha + (alpha_final - alpha) * (epoch / num_epochs)


def alpha_sequence(alpha0: float, alpha_final: float, num_epochs: int) -> list[float]:
    alpha = alpha0
    out = []
    for epoch in range(1, num_epochs + 1):
        alpha = alpha_step(alpha, alpha_final, epoch, num_epochs)
        out.append(alpha)
    return out
