import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trainer_helpers import run_tinynas


@pytest.fixture(scope="session")
def kd_vectors(tmp_path_factory):
    """Shared distillation vectors emitted by the orchestrator CLI."""
    out = tmp_path_factory.mktemp("vectors") / "kd-vectors.json"
    proc = run_tinynas("kd-vectors", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    return json.loads(out.read_text(encoding="utf-8"))


@pytest.fixture
def rng():
    return random.Random(4321)
