"""Command-line interface for the trainer-side evaluator."""
from __future__ import annotations

import json
import sys

import click
import torch

from . import kd as kd_mod
from .model import build_model, parameter_count
from .phases import run_phase
from .serve import serve as serve_loop


@click.group()
def main():
    """Training-side evaluator for the architecture search orchestrator."""


@main.command()
@click.option("--fake", is_flag=True, help="answer with the surrogate formula, no training")
def serve(fake: bool):
    """Serve the evaluator protocol on stdin/stdout until closed."""
    serve_loop(fake=fake)


@main.command()
@click.option("--request", "request_path", required=True, type=click.Path(exists=True))
def run(request_path: str):
    """Evaluate a single request document and print the response."""
    with open(request_path, "r", encoding="utf-8") as fh:
        request = json.load(fh)
    response = run_phase(request)
    click.echo(json.dumps(response, indent=2))
    if response["status"] != "ok":
        sys.exit(1)


@main.command("params")
@click.argument("arch_file", type=click.Path(exists=True))
@click.option("--num-classes", default=100)
def params_cmd(arch_file: str, num_classes: int):
    """Print the trainable-parameter count of an architecture document."""
    with open(arch_file, "r", encoding="utf-8") as fh:
        arch = json.load(fh)
    click.echo(parameter_count(build_model(arch, num_classes)))


@main.command("check-vectors")
@click.option("--vectors", "vectors_path", required=True, type=click.Path(exists=True),
              help="test-vector file produced by `tinynas kd-vectors`")
def check_vectors(vectors_path: str):
    """Validate the torch distillation kernels against shared test vectors."""
    with open(vectors_path, "r", encoding="utf-8") as fh:
        vectors = json.load(fh)
    tolerance = vectors["tolerance"]
    failures = 0

    def check(label, got, expected):
        nonlocal failures
        if abs(got - expected) > tolerance:
            failures += 1
            click.echo(f"MISMATCH {label}: got {got!r}, expected {expected!r}")

    for case in vectors["softened_probs"]:
        got = kd_mod.softened_probs(
            torch.tensor(case["logits"], dtype=torch.float64), case["temperature"]
        )
        for g, e in zip(got.tolist(), case["expected"]):
            check("softened_probs", g, e)
    for case in vectors["kd_loss"]:
        got = kd_mod.kd_loss(
            torch.tensor(case["teacher"], dtype=torch.float64),
            torch.tensor(case["student"], dtype=torch.float64),
            case["temperature"],
        )
        check("kd_loss", got.item(), case["expected"])
    for case in vectors["combined_loss"]:
        got = kd_mod.combined_loss(
            torch.tensor(case["ce"], dtype=torch.float64),
            torch.tensor(case["kd"], dtype=torch.float64),
            case["alpha"],
        )
        check("combined_loss", got.item(), case["expected"])
    for case in vectors["alpha_schedule"]:
        got = kd_mod.alpha_sequence(
            case["alpha0"], case["alpha_final"], case["num_epochs"]
        )
        for g, e in zip(got, case["expected"]):
            check("alpha_schedule", g, e)

    if failures:
        click.echo(f"{failures} mismatch(es)")
        sys.exit(1)
    click.echo("all vectors match")


if __name__ == "__main__":
    main()
