import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tinynas.space import SearchSpace


@pytest.fixture
def default_space():
    return SearchSpace()


@pytest.fixture
def rng():
    return random.Random(12345)
