from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mismatchkit import Dmc, Metric

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def random_channel(rng, nx, ny, floor=0.0):
    w = rng.random((nx, ny)) + floor
    return Dmc(w / w.sum(axis=1, keepdims=True))


def random_metric(rng, w, noise=1.0):
    """Half the time a perturbed matched metric (nonzero rates), else pure noise."""
    nx, ny = w.w.shape
    if rng.random() < 0.5:
        q = np.log(w.w) + noise * rng.normal(size=(nx, ny))
    else:
        q = rng.normal(size=(nx, ny))
    return Metric(q)


def random_instances(seed, count, nx, ny):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        w = random_channel(rng, nx, ny, floor=0.02)
        out.append((w, random_metric(rng, w, noise=0.5)))
    return out


def random_rational_metric(rng, nx, ny, denominator, low=-3, high=3):
    nums = rng.integers(low * denominator, high * denominator + 1, size=(nx, ny))
    return Metric.from_fractions([[Fraction(int(v), denominator) for v in row] for row in nums],
                                 denominator=denominator)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
