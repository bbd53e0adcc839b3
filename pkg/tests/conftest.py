from __future__ import annotations

import random
from pathlib import Path

import numpy as np
import pytest

from refground.geometry import Box

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


def random_box(rng: random.Random, span: float = 100.0) -> Box:
    x1 = rng.uniform(0, span)
    y1 = rng.uniform(0, span)
    return Box(x1, y1, x1 + rng.uniform(0, span), y1 + rng.uniform(0, span))


def random_image(rng: random.Random, width: int = 24, height: int = 16) -> np.ndarray:
    return np.array(
        [[[rng.randrange(256) for _ in range(3)] for _ in range(width)] for _ in range(height)],
        dtype=np.uint8,
    )
