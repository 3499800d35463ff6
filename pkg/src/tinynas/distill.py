"""Knowledge-distillation numeric kernels.

Pure, framework-free reference implementations of the temperature-softened
softmax, the T^2-scaled KL distillation loss, the CE/KD mixing, and the
adaptive alpha recurrence. The training bridge mirrors these definitions in
its own runtime and validates against the shared test-vector file emitted by
``make_test_vectors`` (CLI: ``tinynas kd-vectors``).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

VECTOR_TOLERANCE = 1e-6


def _check_logits(z) -> None:
    if len(z) < 2:
        raise ValueError("logit vector needs at least 2 classes")
    if any(not math.isfinite(v) for v in z):
        raise ValueError("non-finite logits")


def softened_probs(z, temperature: float) -> list[float]:
    """Temperature-softened softmax, stabilized by max subtraction."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    _check_logits(z)
    m = max(z)
    exps = [math.exp((v - m) / temperature) for v in z]
    total = sum(exps)
    return [e / total for e in exps]


def kd_loss(z_t, z_s, temperature: float) -> float:
    """T^2-scaled KL divergence between softened teacher and student logits.

    Terms with zero teacher probability contribute nothing.
    """
    if len(z_t) != len(z_s):
        raise ValueError("teacher and student logit lengths differ")
    p_t = softened_probs(z_t, temperature)
    p_s = softened_probs(z_s, temperature)
    kl = sum(pt * math.log(pt / ps) for pt, ps in zip(p_t, p_s) if pt > 0.0)
    # rounding can push KL of near-identical distributions a hair below zero
    return max(0.0, temperature * temperature * kl)


def combined_loss(ce: float, kd: float, alpha: float) -> float:
    """alpha * CE + (1 - alpha) * KD."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    if not (math.isfinite(ce) and math.isfinite(kd)):
        raise ValueError("non-finite loss inputs")
    return alpha * ce + (1.0 - alpha) * kd


@dataclass(frozen=True)
class AlphaSchedule:
    alpha0: float
    alpha_final: float
    num_epochs: int

    def __post_init__(self):
        if not (0.0 <= self.alpha0 <= 1.0 and 0.0 <= self.alpha_final <= 1.0):
            raise ValueError("alpha bounds must lie in [0, 1]")
        if self.num_epochs < 1:
            raise ValueError("num_epochs must be at least 1")


def alpha_step(alpha: float, sched: AlphaSchedule, epoch: int) -> float:
    """One epoch of the alpha recurrence: alpha += (final - alpha) * epoch/N.

    In-place recurrence: the incoming alpha is the previous epoch's value.
    Applied in order for epochs 1..num_epochs it lands exactly on alpha_final.
    """
    if not (1 <= epoch <= sched.num_epochs):
        raise ValueError(f"epoch {epoch} out of range 1..{sched.num_epochs}")
    return alpha + (sched.alpha_final - alpha) * (epoch / sched.num_epochs)


def alpha_sequence(sched: AlphaSchedule) -> list[float]:
    """Alpha value after each epoch 1..num_epochs, starting from alpha0."""
    alpha = sched.alpha0
    out = []
    for epoch in range(1, sched.num_epochs + 1):
        alpha = alpha_step(alpha, sched, epoch)
        out.append(alpha)
    return out


def make_test_vectors(seed: int = 20240613, random_cases: int = 20) -> dict:
    """Shared cross-runtime test vectors: fixed hand cases plus seeded random
    ones, with expected values computed by the kernels above."""
    rng = random.Random(seed)
    logit_cases = [
        ([0.0, 0.0], 1.0),
        ([2.0, 0.0], 1.0),
        ([2.0, 0.0], 2.0),
        ([1.0, -1.0, 0.5], 4.0),
        ([10.0, -10.0, 0.0, 5.0], 10.0),
    ]
    for _ in range(random_cases):
        n = rng.randint(2, 16)
        logit_cases.append(([rng.uniform(-8.0, 8.0) for _ in range(n)], rng.choice([1.0, 2.0, 4.0, 10.0])))

    softened = [
        {"logits": z, "temperature": t, "expected": softened_probs(z, t)}
        for z, t in logit_cases
    ]
    kd_cases = []
    for z, t in logit_cases:
        z_s = [v + rng.uniform(-2.0, 2.0) for v in z]
        kd_cases.append(
            {
                "teacher": z,
                "student": z_s,
                "temperature": t,
                "expected": kd_loss(z, z_s, t),
            }
        )
    combined = [
        {"ce": ce, "kd": kd, "alpha": a, "expected": combined_loss(ce, kd, a)}
        for ce, kd, a in [
            (2.0, 1.0, 0.4),
            (0.7, 0.0, 1.0),
            (0.7, 0.3, 0.0),
            (1.234, 5.678, 0.25),
        ]
    ]
    schedules = []
    for a0, af, n in [(0.4, 0.8, 50), (0.8, 0.4, 50), (0.0, 1.0, 10), (0.5, 0.5, 5)]:
        sched = AlphaSchedule(alpha0=a0, alpha_final=af, num_epochs=n)
        schedules.append(
            {
                "alpha0": a0,
                "alpha_final": af,
                "num_epochs": n,
                "expected": alpha_sequence(sched),
            }
        )
    return {
        "tolerance": VECTOR_TOLERANCE,
        "softened_probs": softened,
        "kd_loss": kd_cases,
        "combined_loss": combined,
        "alpha_schedule": schedules,
    }
