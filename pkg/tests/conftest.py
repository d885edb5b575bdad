import numpy as np
import pytest

from swexp.probability import CondPmf, Pmf, Source


@pytest.fixture(scope="session")
def ref_source():
    """Binary-input, ternary-output reference source used throughout."""
    return Source(Pmf(np.array([0.2, 0.8])),
                  CondPmf(np.array([[0.8, 0.15, 0.05], [0.05, 0.15, 0.8]])))


@pytest.fixture(scope="session")
def binary_source():
    """2x2 source for simulator-heavy tests."""
    return Source(Pmf(np.array([0.2, 0.8])),
                  CondPmf(np.array([[0.8, 0.2], [0.1, 0.9]])))


def random_source(rng, y_size=2, floor=0.06):
    """A well-conditioned random source: probabilities bounded away from 0."""
    px = rng.uniform(floor, 1.0, size=2)
    px /= px.sum()
    px = floor + (1 - 2 * floor) * px
    px /= px.sum()
    rows = rng.uniform(floor, 1.0, size=(2, y_size))
    rows /= rows.sum(axis=1, keepdims=True)
    rows = floor + (1 - y_size * floor) * rows
    rows /= rows.sum(axis=1, keepdims=True)
    return Source(Pmf(px), CondPmf(rows))


def random_pmf(rng, size, floor=0.0):
    p = rng.uniform(floor, 1.0, size=size)
    p /= p.sum()
    if floor > 0:
        p = floor + (1 - size * floor) * p
        p /= p.sum()
    return p
