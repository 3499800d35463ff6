"""End-to-end search loop: prompt, extract, validate, gate, evaluate,
Pareto-update, feed back — every step persisted to a replayable run ledger.

Evaluation is pluggable: the in-process surrogate keeps the whole loop
hardware-free and deterministic; the external mode drives a trainer
subprocess over a newline-delimited JSON protocol.
"""
from __future__ import annotations

import hashlib
import json
import math
import subprocess
import threading
import time
from dataclasses import dataclass, field

from . import llm, space as space_mod
from .estimator import ConstraintSet, ResourceEstimate, TensorShape, check_constraints, estimate
from .ledger import LedgerWriter, read_events, read_manifest
from .pareto import CandidateRecord, ParetoFront
from .space import ArchitectureConfig, SearchSpace, canonical_hash

# Training-phase hyperparameter defaults. The mini phase scores candidates
# during search; full and kd refine the selected architecture afterwards.
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

SURROGATE_ACC_FLOOR = 1.0
SURROGATE_ACC_CEIL = 90.0


class EvaluatorUnavailableError(RuntimeError):
    pass


class NoCandidateError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvaluationRequest:
    candidate_id: str
    architecture: dict  # the candidate document
    phase: str
    seed: int
    hparams: dict

    def to_wire(self) -> dict:
        return {
            "id": self.candidate_id,
            "arch": self.architecture,
            "phase": self.phase,
            "seed": self.seed,
            "hparams": self.hparams,
        }


@dataclass(frozen=True)
class EvaluationResult:
    candidate_id: str
    test_accuracy: float | None
    wall_seconds: float
    status: str  # ok | failed
    failure_reason: str | None = None


@dataclass(frozen=True)
class RunConfig:
    space: SearchSpace
    constraints: ConstraintSet
    iterations: int
    decoding: llm.DecodingParams
    endpoint: str
    ledger_dir: str
    transport: str = "http"  # http | mock
    script_path: str | None = None
    retries: int = 3
    backoff: float = 0.5
    send_min_p: bool = True
    evaluator_mode: str = "surrogate"  # surrogate | external
    evaluator_command: tuple[str, ...] | None = None
    evaluator_timeout: float = 600.0
    parallel: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iteration budget must be at least 1")
        if self.parallel < 1:
            raise ValueError("parallel evaluations must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.evaluator_mode == "external" and not self.evaluator_command:
            raise EvaluatorUnavailableError("external mode needs an evaluator command")
        if self.transport == "mock" and not self.script_path:
            raise ValueError("mock transport needs a script_path")

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        space = (
            SearchSpace.from_document(doc["space"]) if doc.get("space") else SearchSpace()
        )
        constraints = (
            ConstraintSet.from_document(doc["constraints"])
            if doc.get("constraints")
            else ConstraintSet()
        )
        dec = doc.get("decoding", {})
        decoding = llm.DecodingParams(
            temperature=dec.get("temperature", 1.5),
            min_p=dec.get("min_p", 0.1),
            max_tokens=dec.get("max_tokens", 2048),
            model_name=dec.get("model_name", ""),
        )
        llm_doc = doc.get("llm", {})
        ev = doc.get("evaluator", {})
        command = ev.get("command")
        return cls(
            space=space,
            constraints=constraints,
            iterations=doc.get("iterations", 500),
            decoding=decoding,
            endpoint=doc.get("endpoint", ""),
            ledger_dir=doc["ledger_dir"],
            transport=llm_doc.get("transport", "http"),
            script_path=llm_doc.get("script_path"),
            retries=llm_doc.get("retries", 3),
            backoff=llm_doc.get("backoff", 0.5),
            send_min_p=llm_doc.get("send_min_p", True),
            evaluator_mode=ev.get("mode", "surrogate"),
            evaluator_command=tuple(command) if command else None,
            evaluator_timeout=ev.get("timeout", 600.0),
            parallel=ev.get("parallel", 1),
            seed=doc.get("seed", 0),
        )

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_document(json.load(fh))

    def to_document(self) -> dict:
        return {
            "space": self.space.to_document(),
            "constraints": self.constraints.to_document(),
            "iterations": self.iterations,
            "decoding": {
                "temperature": self.decoding.temperature,
                "min_p": self.decoding.min_p,
                "max_tokens": self.decoding.max_tokens,
                "model_name": self.decoding.model_name,
            },
            "endpoint": self.endpoint,
            "ledger_dir": self.ledger_dir,
            "llm": {
                "transport": self.transport,
                "script_path": self.script_path,
                "retries": self.retries,
                "backoff": self.backoff,
                "send_min_p": self.send_min_p,
            },
            "evaluator": {
                "mode": self.evaluator_mode,
                "command": list(self.evaluator_command) if self.evaluator_command else None,
                "timeout": self.evaluator_timeout,
                "parallel": self.parallel,
            },
            "seed": self.seed,
        }


def surrogate_noise(candidate_hash: str, seed: int) -> float:
    """Deterministic pseudo-noise in [-2, 2) from SHA-256(hash || seed)."""
    digest = hashlib.sha256(
        candidate_hash.encode("utf-8") + seed.to_bytes(8, "big")
    ).digest()
    h = int.from_bytes(digest[:8], "big")
    return 4.0 * (h / 2**64) - 2.0


def surrogate_evaluate(
    est: ResourceEstimate,
    candidate_hash: str,
    seed: int,
    noise: float | None = None,
) -> EvaluationResult:
    """Hardware-free stand-in for mini-training.

    accuracy = clamp(5*ln(MACs/1e6) + 2*ln(params/1e3) + u, 1, 90) with u a
    deterministic hash-derived perturbation. ``noise`` overrides u in tests.
    """
    if est.total_macs <= 0 or est.total_params <= 0:
        raise ValueError("estimate totals must be positive")
    u = surrogate_noise(candidate_hash, seed) if noise is None else noise
    raw = (
        5.0 * math.log(est.total_macs / 1e6)
        + 2.0 * math.log(est.total_params / 1e3)
        + u
    )
    accuracy = min(SURROGATE_ACC_CEIL, max(SURROGATE_ACC_FLOOR, raw))
    return EvaluationResult(
        candidate_id="", test_accuracy=accuracy, wall_seconds=0.0, status="ok"
    )


class ExternalEvaluator:
    """Client side of the evaluator subprocess protocol.

    One JSON request per line on the child's stdin; one JSON response per
    line on its stdout, matched by id (order-free). Malformed output lines
    fail the pending requests as protocol violations but leave the child and
    the search running.
    """

    def __init__(self, command: tuple[str, ...], timeout: float = 600.0):
        try:
            self.proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorUnavailableError(str(exc)) from exc
        self.timeout = timeout
        self._cond = threading.Condition()
        self._results: dict[str, dict] = {}
        self._protocol_errors = 0
        self._eof = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        for line in self.proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                rid = doc["id"]
            except (json.JSONDecodeError, KeyError, TypeError):
                with self._cond:
                    self._protocol_errors += 1
                    self._cond.notify_all()
                continue
            with self._cond:
                self._results[rid] = doc
                self._cond.notify_all()
        with self._cond:
            self._eof = True
            self._cond.notify_all()

    def evaluate(self, req: EvaluationRequest) -> EvaluationResult:
        start = time.monotonic()
        try:
            self.proc.stdin.write(json.dumps(req.to_wire()) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            return EvaluationResult(
                candidate_id=req.candidate_id,
                test_accuracy=None,
                wall_seconds=0.0,
                status="failed",
                failure_reason=f"evaluator-crash: {exc}",
            )
        deadline = start + self.timeout
        with self._cond:
            errors_seen = self._protocol_errors
            while req.candidate_id not in self._results:
                if self._protocol_errors > errors_seen:
                    return self._failed(req, "protocol-violation: malformed evaluator output")
                if self._eof:
                    return self._failed(req, "evaluator-crash: output stream closed")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return self._failed(req, f"timeout after {self.timeout}s")
                self._cond.wait(timeout=remaining)
            doc = self._results.pop(req.candidate_id)
        wall = time.monotonic() - start
        if doc.get("status") == "ok" and isinstance(doc.get("test_accuracy"), (int, float)):
            return EvaluationResult(
                candidate_id=req.candidate_id,
                test_accuracy=float(doc["test_accuracy"]),
                wall_seconds=float(doc.get("wall_seconds", wall)),
                status="ok",
            )
        return self._failed(req, str(doc.get("reason", "evaluator reported failure")))

    @staticmethod
    def _failed(req: EvaluationRequest, reason: str) -> EvaluationResult:
        return EvaluationResult(
            candidate_id=req.candidate_id,
            test_accuracy=None,
            wall_seconds=0.0,
            status="failed",
            failure_reason=reason,
        )

    def close(self) -> None:
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()


def build_evaluation_request(
    candidate_id: str,
    arch: ArchitectureConfig,
    est: ResourceEstimate,
    phase: str,
    seed: int,
) -> EvaluationRequest:
    hparams = dict(PHASE_DEFAULTS[phase])
    # estimate metadata rides along so fake/surrogate evaluators agree bit-exactly
    hparams["arch_hash"] = canonical_hash(arch)
    hparams["estimate"] = {
        "total_macs": est.total_macs,
        "total_params": est.total_params,
        "peak_sram_bytes": est.peak_sram_bytes,
    }
    return EvaluationRequest(
        candidate_id=candidate_id,
        architecture=arch.to_document(),
        phase=phase,
        seed=seed,
        hparams=hparams,
    )


def dispatch_evaluation(
    req: EvaluationRequest,
    config: RunConfig,
    est: ResourceEstimate,
    evaluator: ExternalEvaluator | None = None,
) -> EvaluationResult:
    """Run one evaluation in the configured mode."""
    if config.evaluator_mode == "surrogate":
        result = surrogate_evaluate(est, req.hparams["arch_hash"], req.seed)
        return EvaluationResult(
            candidate_id=req.candidate_id,
            test_accuracy=result.test_accuracy,
            wall_seconds=0.0,
            status="ok",
        )
    if evaluator is None:
        raise EvaluatorUnavailableError("no external evaluator attached")
    return evaluator.evaluate(req)


@dataclass
class RunResult:
    ledger_dir: str
    front: ParetoFront
    iterations_run: int
    evaluations: int
    rejections: int
    duplicates: int


def _record_from_evaluation(
    candidate_id: str,
    arch_hash: str,
    est_doc: dict,
    test_accuracy: float,
    iteration: int,
    phase: str = "mini",
) -> CandidateRecord:
    return CandidateRecord(
        candidate_id=candidate_id,
        arch_hash=arch_hash,
        accuracy=round(test_accuracy, 2),
        macs=est_doc["total_macs"],
        params=est_doc["total_params"],
        peak_sram_bytes=est_doc["peak_sram_bytes"],
        phase=phase,
        iteration=iteration,
        status="evaluated",
    )


def search(config: RunConfig, clock=time.time) -> RunResult:
    """Run the search loop up to the iteration budget.

    Each iteration sends the system+task prompt plus the latest feedback
    message only (stateless re-prompting), extracts one candidate, dedups by
    canonical hash, gates on the static estimate, evaluates survivors in the
    mini phase and folds them into the Pareto front.
    """
    space = config.space
    transport = (
        llm.MockTransport.from_file(config.script_path)
        if config.transport == "mock"
        else llm.HttpTransport()
    )
    evaluator = (
        ExternalEvaluator(config.evaluator_command, timeout=config.evaluator_timeout)
        if config.evaluator_mode == "external"
        else None
    )
    base_prompt = llm.build_generation_prompt(space, config.constraints)
    input_shape = TensorShape(space.input_resolution, space.input_resolution, 3)
    front = ParetoFront()
    seen_hashes: set[str] = set()
    feedback: str | None = None
    evaluations = rejections = duplicates = 0
    iterations_run = 0

    manifest = {"config": config.to_document(), "seed": config.seed}
    with LedgerWriter(config.ledger_dir, manifest=manifest) as ledger:
        try:
            for iteration in range(1, config.iterations + 1):
                iterations_run = iteration
                candidate_id = f"cand{iteration:04d}"
                transcript = base_prompt
                if feedback is not None:
                    transcript = transcript.with_user_message(feedback)
                ledger.append(
                    "prompt_sent", iteration, {"messages": transcript.to_wire()}, clock()
                )
                try:
                    content = llm.request_completion(
                        config.endpoint,
                        transcript,
                        config.decoding,
                        transport=transport,
                        retries=config.retries,
                        backoff=config.backoff,
                        send_min_p=config.send_min_p,
                    )
                except llm.RetryExhaustedError as exc:
                    ledger.append(
                        "completion_received", iteration, {"error": str(exc)}, clock()
                    )
                    continue
                ledger.append(
                    "completion_received", iteration, {"content": content}, clock()
                )

                proposal = llm.extract_candidate(content, space, candidate_id=candidate_id)
                if proposal.extracted is None:
                    ledger.append(
                        "candidate_parsed",
                        iteration,
                        {"ok": False, "candidate_id": candidate_id, "error": proposal.extraction_error},
                        clock(),
                    )
                    feedback = llm.build_parse_failure_feedback(proposal.extraction_error)
                    continue
                arch = proposal.extracted
                arch_hash = canonical_hash(arch)
                ledger.append(
                    "candidate_parsed",
                    iteration,
                    {
                        "ok": True,
                        "candidate_id": candidate_id,
                        "arch": arch.to_document(),
                        "arch_hash": arch_hash,
                    },
                    clock(),
                )

                if arch_hash in seen_hashes:
                    duplicates += 1
                    ledger.append(
                        "gate_verdict",
                        iteration,
                        {"kind": "duplicate", "candidate_id": candidate_id, "arch_hash": arch_hash},
                        clock(),
                    )
                    feedback = llm.build_duplicate_feedback(arch_hash)
                    continue
                seen_hashes.add(arch_hash)

                est = estimate(arch, input_shape, num_classes=space.num_classes)
                verdict = check_constraints(est, config.constraints)
                est_doc = {
                    "total_macs": est.total_macs,
                    "total_params": est.total_params,
                    "peak_sram_bytes": est.peak_sram_bytes,
                }
                ledger.append(
                    "gate_verdict",
                    iteration,
                    {
                        "kind": "gate",
                        "candidate_id": candidate_id,
                        "arch_hash": arch_hash,
                        "verdict": verdict.to_document(),
                        "estimate": est_doc,
                    },
                    clock(),
                )
                if not verdict.accepted:
                    rejections += 1
                    feedback = llm.build_rejection_feedback(verdict)
                    continue

                req = build_evaluation_request(candidate_id, arch, est, "mini", config.seed)
                result = dispatch_evaluation(req, config, est, evaluator=evaluator)
                evaluations += 1
                ledger.append(
                    "evaluation_result",
                    iteration,
                    {
                        "candidate_id": candidate_id,
                        "arch_hash": arch_hash,
                        "phase": "mini",
                        "seed": config.seed,
                        "status": result.status,
                        "test_accuracy": result.test_accuracy,
                        "wall_seconds": result.wall_seconds,
                        "failure_reason": result.failure_reason,
                        "estimate": est_doc,
                    },
                    clock(),
                )
                if result.status != "ok":
                    continue

                rec = _record_from_evaluation(
                    candidate_id, arch_hash, est_doc, result.test_accuracy, iteration
                )
                front.update(rec)
                ledger.append("front_snapshot", iteration, front.to_document(), clock())
                feedback = llm.build_pareto_feedback(
                    front.statistics(), front.best_accuracy, config.constraints
                )
        except KeyboardInterrupt:
            pass  # operator interrupt: flush what we have
        finally:
            if evaluator is not None:
                evaluator.close()

    return RunResult(
        ledger_dir=config.ledger_dir,
        front=front,
        iterations_run=iterations_run,
        evaluations=evaluations,
        rejections=rejections,
        duplicates=duplicates,
    )


def replay(ledger_dir: str) -> ParetoFront:
    """Rebuild the front purely from evaluation_result events."""
    front = ParetoFront()
    for event in read_events(ledger_dir, type="evaluation_result"):
        data = event.data
        if data.get("status") != "ok":
            continue
        rec = _record_from_evaluation(
            data["candidate_id"],
            data["arch_hash"],
            data["estimate"],
            data["test_accuracy"],
            event.iteration,
            phase=data.get("phase", "mini"),
        )
        front.update(rec)
    return front


def select_final(
    front: ParetoFront, policy: str, threshold: float | None = None
) -> CandidateRecord:
    """Pick the candidate to promote to full training.

    ``best_accuracy_in_budget``: highest-accuracy front member (front members
    all passed the gates). ``min_macs_at_accuracy_floor``: fewest MACs among
    members at or above the accuracy threshold. Ties break by lower MACs,
    lower params, then candidate id.
    """
    if not front.members:
        raise NoCandidateError("front is empty")
    if policy == "best_accuracy_in_budget":
        best = max(m.accuracy for m in front.members)
        tied = [m for m in front.members if m.accuracy == best]
        return min(tied, key=lambda m: (m.macs, m.params, m.candidate_id))
    if policy == "min_macs_at_accuracy_floor":
        if threshold is None:
            raise ValueError("floor policy needs a threshold")
        eligible = [m for m in front.members if m.accuracy >= threshold]
        if not eligible:
            raise NoCandidateError(f"no front member reaches {threshold}% accuracy")
        return min(eligible, key=lambda m: (m.macs, m.params, m.candidate_id))
    raise ValueError(f"unknown policy {policy!r}")
