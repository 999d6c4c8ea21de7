"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from chestrel.datasets import synth_corpus
from chestrel.geometry import AnatomicalParts, Box


@pytest.fixture(scope="session")
def corpus5():
    """Deterministic 200-image synthetic corpus used by several modules."""
    return synth_corpus(seed=5, n_images=200)


@pytest.fixture
def simple_parts():
    """Hand-written anatomy on a 100x100 canvas with lung union (10, 15, 95, 90)."""
    return AnatomicalParts(
        left_lung=Box(10, 20, 50, 90),
        right_lung=Box(55, 15, 95, 85),
        left_scapula=Box(5, 18, 30, 60),
        right_scapula=Box(70, 16, 97, 58),
        heart=Box(35, 45, 70, 80),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
