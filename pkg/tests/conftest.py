import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng, shape, p=None):
    p = rng.uniform(0.1, 0.6) if p is None else p
    return (rng.random(shape) < p).astype(np.uint8)
