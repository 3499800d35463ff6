"""Evaluator subprocess protocol: one JSON request per stdin line, one JSON
response per stdout line, matched by id.

``fake`` mode skips training and answers with the orchestrator's surrogate
formula — same hash-derived noise, same clamp — so integration runs agree
bit-exactly with surrogate-mode searches (wall_seconds is 0.0 for the same
reason).
"""
from __future__ import annotations

import hashlib
import json
import math
import sys

from .phases import run_phase

ACC_FLOOR = 1.0
ACC_CEIL = 90.0


def surrogate_noise(arch_hash: str, seed: int) -> float:
    digest = hashlib.sha256(
        arch_hash.encode("utf-8") + int(seed).to_bytes(8, "big")
    ).digest()
    return 4.0 * (int.from_bytes(digest[:8], "big") / 2**64) - 2.0


def fake_response(request: dict) -> dict:
    rid = request.get("id")
    try:
        hparams = request["hparams"]
        arch_hash = hparams["arch_hash"]
        estimate = hparams["estimate"]
        macs = estimate["total_macs"]
        params = estimate["total_params"]
        seed = request.get("seed", 0)
        if macs <= 0 or params <= 0:
            raise ValueError("estimate totals must be positive")
    except (KeyError, TypeError, ValueError) as exc:
        return {"id": rid, "status": "failed", "reason": f"bad fake request: {exc}"}
    raw = (
        5.0 * math.log(macs / 1e6)
        + 2.0 * math.log(params / 1e3)
        + surrogate_noise(arch_hash, seed)
    )
    accuracy = min(ACC_CEIL, max(ACC_FLOOR, raw))
    return {"id": rid, "status": "ok", "test_accuracy": accuracy, "wall_seconds": 0.0}


def handle_line(line: str, fake: bool = False) -> dict | None:
    line = line.strip()
    if not line:
        return None
    try:
        request = json.loads(line)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
    except (json.JSONDecodeError, ValueError) as exc:
        return {"id": None, "status": "failed", "reason": f"malformed request: {exc}"}
    if fake:
        return fake_response(request)
    return run_phase(request)


def serve(stdin=None, stdout=None, fake: bool = False) -> None:
    """Run until the request stream closes; one response per request, the
    process survives malformed input."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        response = handle_line(line, fake=fake)
        if response is None:
            continue
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
