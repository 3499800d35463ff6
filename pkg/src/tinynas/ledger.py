"""Append-only run ledger: one JSON document per line, plus a manifest.

Every search step is appended as an event; timestamps live in a separate
field that is excluded from the comparison digest, so two runs with identical
config, seed and scripted inputs produce identical digests.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Iterator

EVENT_TYPES = (
    "prompt_sent",
    "completion_received",
    "candidate_parsed",
    "gate_verdict",
    "evaluation_result",
    "front_snapshot",
    "explanation_recorded",
)

MANIFEST_NAME = "manifest.json"
EVENTS_NAME = "events.jsonl"


class CorruptLedgerError(RuntimeError):
    pass


@dataclass(frozen=True)
class LedgerEvent:
    type: str
    iteration: int
    data: dict
    ts: float

    def digest_payload(self) -> str:
        # ts excluded: it is the only run-dependent field
        return json.dumps(
            {"type": self.type, "iteration": self.iteration, "data": self.data},
            sort_keys=True,
            separators=(",", ":"),
        )


class LedgerWriter:
    """Appends events to ``<dir>/events.jsonl``; crash-safe line-at-a-time."""

    def __init__(self, directory: str, manifest: dict | None = None):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        if manifest is not None:
            with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True)
                fh.write("\n")
        self._fh = open(os.path.join(directory, EVENTS_NAME), "a", encoding="utf-8")

    def append(self, type: str, iteration: int, data: dict, ts: float) -> None:
        if type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {type!r}")
        line = json.dumps(
            {"type": type, "iteration": iteration, "data": data, "ts": ts},
            sort_keys=True,
            separators=(",", ":"),
        )
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "LedgerWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CorruptLedgerError(f"missing manifest: {path}")
    except json.JSONDecodeError as exc:
        raise CorruptLedgerError(f"bad manifest: {exc}")


def read_events(directory: str, type: str | None = None) -> Iterator[LedgerEvent]:
    path = os.path.join(directory, EVENTS_NAME)
    if not os.path.exists(path):
        raise CorruptLedgerError(f"missing event log: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                event = LedgerEvent(
                    type=doc["type"],
                    iteration=doc["iteration"],
                    data=doc["data"],
                    ts=doc["ts"],
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorruptLedgerError(f"{path}:{lineno}: {exc}")
            if type is None or event.type == type:
                yield event


def ledger_digest(directory: str) -> str:
    """SHA-256 over the timestamp-stripped event stream."""
    h = hashlib.sha256()
    for event in read_events(directory):
        h.update(event.digest_payload().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
