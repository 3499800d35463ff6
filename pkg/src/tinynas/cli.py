"""Command-line interface for the search orchestrator."""
from __future__ import annotations

import json
import sys
import time

import click

from . import distill, llm, orchestrator, space as space_mod
from .estimator import ConstraintSet, TensorShape, check_constraints, estimate
from .ledger import LedgerWriter, ledger_digest, read_manifest
from .pareto import ParetoFront, format_stat_triple
from .space import (
    ArchitectureParseError,
    SearchSpace,
    count_stage_configs,
    validate_architecture,
)


def _load_space(space_file: str | None) -> SearchSpace:
    if space_file is None:
        return SearchSpace()
    with open(space_file, "r", encoding="utf-8") as fh:
        return SearchSpace.from_document(json.load(fh))


def _load_arch(arch_file: str, space: SearchSpace):
    with open(arch_file, "r", encoding="utf-8") as fh:
        return space_mod.parse_architecture(fh.read(), space)


@click.group()
def main():
    """LLM-guided architecture search for MCU-class targets."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def search(config_path: str):
    """Run the search loop described by a JSON config file."""
    config = orchestrator.RunConfig.from_file(config_path)
    result = orchestrator.search(config)
    click.echo(
        f"ran {result.iterations_run} iteration(s): {result.evaluations} evaluated, "
        f"{result.rejections} gate-rejected, {result.duplicates} duplicate(s)"
    )
    click.echo(f"ledger: {result.ledger_dir}")
    click.echo(f"ledger digest: {ledger_digest(result.ledger_dir)}")
    if result.front.members:
        stats = result.front.statistics()
        click.echo(
            f"front: {stats.count} member(s), accuracy "
            f"{format_stat_triple(stats.accuracy_min, stats.accuracy_max, stats.accuracy_mean)}"
        )


@main.command()
@click.argument("arch_file", type=click.Path(exists=True))
@click.option("--space", "space_file", type=click.Path(exists=True), default=None)
def validate(arch_file: str, space_file: str | None):
    """Validate an architecture document against the search space."""
    space = _load_space(space_file)
    try:
        _load_arch(arch_file, space)
    except ArchitectureParseError as exc:
        click.echo(f"invalid ({exc.kind}): {exc}")
        for v in exc.violations:
            click.echo(f"  - {v.describe()}")
        sys.exit(1)
    click.echo("ok")


@main.command("estimate")
@click.argument("arch_file", type=click.Path(exists=True))
@click.option("--space", "space_file", type=click.Path(exists=True), default=None)
@click.option("--macs-min", type=int, default=None)
@click.option("--macs-max", type=int, default=None)
@click.option("--sram-limit", type=int, default=None)
def estimate_cmd(arch_file, space_file, macs_min, macs_max, sram_limit):
    """Print the resource estimate; exit nonzero if the gates reject it."""
    space = _load_space(space_file)
    try:
        arch = _load_arch(arch_file, space)
    except ArchitectureParseError as exc:
        click.echo(f"invalid ({exc.kind}): {exc}", err=True)
        sys.exit(2)
    defaults = ConstraintSet()
    limits = ConstraintSet(
        macs_min=macs_min if macs_min is not None else defaults.macs_min,
        macs_max=macs_max if macs_max is not None else defaults.macs_max,
        sram_limit_bytes=sram_limit if sram_limit is not None else defaults.sram_limit_bytes,
    )
    shape = TensorShape(space.input_resolution, space.input_resolution, 3)
    est = estimate(arch, shape, num_classes=space.num_classes)
    verdict = check_constraints(est, limits)
    report = est.to_document()
    report["gate"] = verdict.to_document()
    click.echo(json.dumps(report, indent=2))
    if not verdict.accepted:
        sys.exit(1)


@main.group()
def pareto():
    """Inspect the Pareto front of a run ledger."""


@pareto.command("show")
@click.argument("ledger_dir", type=click.Path(exists=True))
def pareto_show(ledger_dir: str):
    """Print the reconstructed front with summary statistics."""
    manifest = read_manifest(ledger_dir)
    space = SearchSpace.from_document(manifest["config"]["space"])
    per_stage = count_stage_configs(space)
    click.echo(
        f"Search space: {per_stage:,} stage configurations; total "
        f"{per_stage:,}^{space.stage_count} architectures"
    )
    front = orchestrator.replay(ledger_dir)
    if not front.members:
        click.echo("Pareto front is empty.")
        return
    stats = front.statistics()
    click.echo(f"Pareto front: {stats.count} member(s) ([Min, Max] Avg)")
    click.echo(
        f"  Accuracy (%): {format_stat_triple(stats.accuracy_min, stats.accuracy_max, stats.accuracy_mean)}"
    )
    click.echo(
        f"  MACs (M): {format_stat_triple(stats.macs_min / 1e6, stats.macs_max / 1e6, stats.macs_mean / 1e6)}"
    )
    click.echo(
        f"  Parameters (M): {format_stat_triple(stats.params_min / 1e6, stats.params_max / 1e6, stats.params_mean / 1e6)}"
    )
    click.echo(json.dumps(front.to_document(), indent=2))


@main.command()
@click.argument("ledger_dir", type=click.Path(exists=True))
def replay(ledger_dir: str):
    """Reconstruct the front from evaluation events and print it."""
    front = orchestrator.replay(ledger_dir)
    click.echo(json.dumps(front.to_document(), indent=2))


@main.command()
@click.argument("ledger_dir", type=click.Path(exists=True))
@click.option(
    "--policy",
    type=click.Choice(["best_accuracy_in_budget", "min_macs_at_accuracy_floor"]),
    default="best_accuracy_in_budget",
)
@click.option("--threshold", type=float, default=None, help="accuracy floor in percent")
def select(ledger_dir: str, policy: str, threshold: float | None):
    """Pick the final candidate from a run's front."""
    front = orchestrator.replay(ledger_dir)
    try:
        rec = orchestrator.select_final(front, policy, threshold=threshold)
    except orchestrator.NoCandidateError as exc:
        click.echo(f"no candidate: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(rec.to_document(), indent=2))


@main.command()
@click.argument("arch_file", type=click.Path(exists=True))
@click.option("--endpoint", required=True)
@click.option("--model", default="")
@click.option("--space", "space_file", type=click.Path(exists=True), default=None)
@click.option("--script", "script_path", type=click.Path(exists=True), default=None,
              help="use the scripted mock transport instead of HTTP")
@click.option("--ledger", "ledger_dir", type=click.Path(), default=None,
              help="record the explanation into this run ledger")
def explain(arch_file, endpoint, model, space_file, script_path, ledger_dir):
    """Ask the LLM why an architecture was designed the way it is."""
    space = _load_space(space_file)
    arch = _load_arch(arch_file, space)
    transcript = llm.build_explanation_prompt(arch)
    decoding = llm.DecodingParams(model_name=model)
    transport = llm.MockTransport.from_file(script_path) if script_path else None
    response = llm.request_completion(endpoint, transcript, decoding, transport=transport)
    click.echo(response)
    if ledger_dir:
        with LedgerWriter(ledger_dir) as writer:
            writer.append(
                "explanation_recorded",
                0,
                {
                    "candidate_id": arch.candidate_id,
                    "prompt": transcript.messages[-1].content,
                    "response": response,
                },
                time.time(),
            )


@main.command("kd-vectors")
@click.option("--out", "out_path", required=True, type=click.Path())
def kd_vectors(out_path: str):
    """Emit the shared distillation test-vector file."""
    vectors = distill.make_test_vectors()
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(vectors, fh, indent=2)
        fh.write("\n")
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
