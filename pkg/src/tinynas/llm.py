"""Prompt construction and chat-completions transport.

Builds the four prompt families used by the search loop (generation,
rejection feedback, Pareto feedback, explanation), drives an OpenAI-compatible
endpoint with the search's decoding parameters, and extracts candidate JSON
from free-form model output. Prompts are pure templates: identical inputs
yield byte-identical transcripts.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field

import requests

from . import space as space_mod
from .estimator import ConstraintSet, GateVerdict
from .pareto import CandidateRecord, FrontStatistics, format_stat_triple
from .space import ArchitectureConfig, ArchitectureParseError, SearchSpace

API_KEY_ENV = "TINYNAS_API_KEY"
CHAT_COMPLETIONS_PATH = "/v1/chat/completions"


class TransportError(RuntimeError):
    """Network or HTTP failure talking to the completions endpoint."""


class EmptyCompletionError(RuntimeError):
    """The endpoint answered but the first choice had no content."""


class RetryExhaustedError(RuntimeError):
    def __init__(self, attempts: int, last: Exception):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 1.5
    min_p: float = 0.1
    max_tokens: int = 2048
    model_name: str = ""

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not (0.0 <= self.min_p <= 1.0):
            raise ValueError("min_p must lie in [0, 1]")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class ChatTranscript:
    messages: tuple[ChatMessage, ...]

    def __post_init__(self):
        if not self.messages:
            raise ValueError("transcript must be non-empty")

    def with_user_message(self, content: str) -> "ChatTranscript":
        return ChatTranscript(self.messages + (ChatMessage("user", content),))

    def to_wire(self) -> list[dict]:
        return [{"role": m.role, "content": m.content} for m in self.messages]


@dataclass(frozen=True)
class CandidateProposal:
    raw_text: str
    extracted: ArchitectureConfig | None = None
    extraction_error: str | None = None


@dataclass(frozen=True)
class Explanation:
    candidate_id: str
    prompt: str
    response: str
    timestamp: float


def _macs_m(value: int) -> str:
    m = value / 1e6
    return f"{m:g}M"


def _kb(value: int) -> str:
    return f"{value / 1024:g} KB"


SYSTEM_FRAMING = (
    "You are a neural architecture design algorithm that exclusively outputs "
    "configurations in JSON format."
)


def build_generation_prompt(space: SearchSpace, limits: ConstraintSet) -> ChatTranscript:
    """Initial generation prompt: role framing, task, objective, constraints,
    and the serialized search-space document."""
    space_json = json.dumps(space.to_document(), separators=(",", ":"))
    res = space.input_resolution
    user = (
        "Task: Generate a lightweight neural network architecture tailored for "
        f"{space.num_classes}-class CIFAR-style image classification.\n"
        "Objective: Achieve the highest possible accuracy while minimizing "
        "computational cost and memory usage.\n"
        "Constraints:\n"
        "- Minimize RAM usage by reducing intermediate activation size.\n"
        "- Prioritize stride=2 in early blocks for downsampling.\n"
        "- Use smaller expansion_factor and output_channels in early blocks.\n"
        "- Limit SE blocks and their ratios to reduce activation memory.\n"
        f"- Ensure total MACs <= {_macs_m(limits.macs_max)} and >= {_macs_m(limits.macs_min)}.\n"
        f"- Peak int8 SRAM must not exceed {_kb(limits.sram_limit_bytes)}.\n"
        f"- Image size: {res}×{res}.\n"
        "Search Space: Use only values from the hierarchical search space: "
        f"{space_json}\n"
        "Output a single JSON object of the form "
        '{"stages":[{"out_channels":...,"kernel":...,"stride":...,"expansion":...,'
        '"se":...,"se_ratio":...,"conv_block":...,"skip":...,"activation":...,'
        '"layers":...}, ...]} with exactly '
        f"{space.stage_count} stage entries and no other keys."
    )
    return ChatTranscript(
        (ChatMessage("system", SYSTEM_FRAMING), ChatMessage("user", user))
    )


def build_rejection_feedback(verdict: GateVerdict) -> str:
    """Feedback for a gate rejection: every violated metric with its current
    value and the desired bound(s)."""
    if verdict.accepted:
        raise ValueError("verdict is not a rejection")
    lines = ["The previous architecture was rejected:"]
    for v in verdict.violations:
        if v.kind in ("macs_low", "macs_high"):
            direction = "below" if v.kind == "macs_low" else "above"
            lines.append(
                f"- Total MACs are {_macs_m(v.current)}, {direction} the required "
                f"range [{_macs_m(v.bound_low)}, {_macs_m(v.bound_high)}]."
            )
        elif v.kind == "sram":
            lines.append(
                f"- Estimated peak SRAM is {_kb(v.current)}, above the "
                f"{_kb(v.bound_high)} limit."
            )
        else:
            lines.append(f"- {v.kind}: current value {v.current}.")
    lines.append(
        "Propose a corrected architecture using only values from the search space."
    )
    return "\n".join(lines)


def build_duplicate_feedback(arch_hash: str) -> str:
    """Feedback when a candidate repeats an already-explored architecture."""
    return (
        f"The proposed architecture (hash {arch_hash[:12]}) was already explored "
        "in a previous iteration. Propose a novel architecture from the search "
        "space that has not been generated before."
    )


def build_parse_failure_feedback(reason: str) -> str:
    return (
        f"The previous output could not be used: {reason}\n"
        "Reply with a single valid JSON architecture document using only values "
        "from the search space."
    )


def build_pareto_feedback(
    stats: FrontStatistics, best: CandidateRecord, limits: ConstraintSet
) -> str:
    """Front summary plus one targeted suggestion for the next candidate."""
    lines = [
        f"Current Pareto front holds {stats.count} candidate(s). "
        "Metrics are given as [Min, Max] Avg:",
        f"- Accuracy (%): {format_stat_triple(stats.accuracy_min, stats.accuracy_max, stats.accuracy_mean)}",
        f"- MACs (M): {format_stat_triple(stats.macs_min / 1e6, stats.macs_max / 1e6, stats.macs_mean / 1e6)}",
        f"- Parameters (M): {format_stat_triple(stats.params_min / 1e6, stats.params_max / 1e6, stats.params_mean / 1e6)}",
        f"Best accuracy so far: {best.accuracy:.2f}% ({best.macs / 1e6:.2f}M MACs, "
        f"{best.params / 1e6:.2f}M parameters, candidate {best.candidate_id}).",
    ]
    if stats.macs_mean > 0.75 * limits.macs_max:
        lines.append(
            "Suggestion: reduce computational cost - lower MACs and parameters "
            "(smaller expansion factors, channels, or depth) in the next candidate."
        )
    else:
        lines.append(
            "Suggestion: focus on improving accuracy while maintaining resource "
            "efficiency in the next candidate."
        )
    return "\n".join(lines)


EXPLANATION_HEADINGS = (
    "Kernel sizes",
    "Expansion factors",
    "Stride",
    "SE Ratio",
    "Activation functions",
    "Skip operations",
)


def build_explanation_prompt(arch: ArchitectureConfig) -> ChatTranscript:
    """Ask the model to justify a design across the six reasoning categories."""
    if not arch.stages:
        raise ValueError("architecture has no stages")
    arch_json = space_mod.serialize_architecture(arch)
    headings = "\n".join(f"- {h}" for h in EXPLANATION_HEADINGS)
    user = (
        "Explain why this design was chosen for the current iteration. "
        "Highlight the reasoning behind these choices.\n"
        f"Architecture: {arch_json}\n"
        f"Cover each of the following aspects:\n{headings}"
    )
    return ChatTranscript(
        (
            ChatMessage(
                "system",
                "You are a neural architecture design algorithm explaining your "
                "own design decisions.",
            ),
            ChatMessage("user", user),
        )
    )


class MockTransport:
    """Scripted transport for tests: replies come from a file, in request order.

    The script file is a JSON array whose entries are either a string (the
    assistant reply) or an object ``{"error": reason}`` to simulate a
    transient transport failure. Performs zero network activity.
    """

    def __init__(self, script: list):
        self._script = list(script)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str) -> "MockTransport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def send(self, endpoint: str, body: dict) -> str:
        with self._lock:
            self.calls += 1
            if self._cursor >= len(self._script):
                raise TransportError("mock script exhausted")
            entry = self._script[self._cursor]
            self._cursor += 1
        if isinstance(entry, dict) and "error" in entry:
            raise TransportError(entry["error"])
        if not isinstance(entry, str):
            raise TransportError(f"bad mock script entry: {entry!r}")
        return entry


class HttpTransport:
    """POSTs to ``<endpoint>/v1/chat/completions`` with the API key from the
    environment."""

    def __init__(self, timeout: float = 120.0):
        self.timeout = timeout

    def send(self, endpoint: str, body: dict) -> str:
        url = endpoint.rstrip("/") + CHAT_COMPLETIONS_PATH
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        except ValueError as exc:
            raise TransportError(f"non-JSON response: {exc}") from exc
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {exc}") from exc
        return content


def request_completion(
    endpoint: str,
    transcript: ChatTranscript,
    decoding: DecodingParams,
    transport=None,
    retries: int = 3,
    backoff: float = 0.5,
    send_min_p: bool = True,
) -> str:
    """One chat-completions request with retry on transient transport errors.

    ``send_min_p`` drops the min_p field for endpoints that reject it.
    """
    if transport is None:
        transport = HttpTransport()
    body = {
        "model": decoding.model_name,
        "messages": transcript.to_wire(),
        "temperature": decoding.temperature,
        "max_tokens": decoding.max_tokens,
    }
    if send_min_p:
        body["min_p"] = decoding.min_p
    last: Exception | None = None
    for attempt in range(retries):
        try:
            content = transport.send(endpoint, body)
            if not content or not content.strip():
                raise EmptyCompletionError("completion had no content")
            return content
        except (TransportError, EmptyCompletionError) as exc:
            last = exc
            if attempt + 1 < retries and backoff > 0:
                time.sleep(backoff * (2**attempt))
    raise RetryExhaustedError(retries, last)


def _first_json_object(text: str) -> str | None:
    """First balanced JSON object in the text, tolerating prose and fences."""
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, end = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return text[idx : idx + end]
        idx = text.find("{", idx + 1)
    return None


def extract_candidate(
    raw: str, space: SearchSpace, candidate_id: str = ""
) -> CandidateProposal:
    """Locate candidate JSON in model output and parse it against the space.

    Failures are data, not exceptions: the reason is phrased so it can feed
    straight into rejection feedback.
    """
    snippet = _first_json_object(raw)
    if snippet is None:
        return CandidateProposal(
            raw_text=raw, extraction_error="no JSON object found in the output"
        )
    try:
        arch = space_mod.parse_architecture(
            snippet, space, candidate_id=candidate_id, source="llm"
        )
    except ArchitectureParseError as exc:
        return CandidateProposal(raw_text=raw, extraction_error=f"{exc.kind}: {exc}")
    return CandidateProposal(raw_text=raw, extracted=arch)
