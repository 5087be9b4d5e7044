"""
Shared fixtures for the test suite.

Puts the project root on sys.path the same way the entry points do.
"""

import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from src.numerics.rng import RngStream  # noqa: E402


@pytest.fixture
def gen():
    """Seeded numpy generator for building random instances."""
    return np.random.default_rng(1234)


@pytest.fixture
def rng():
    return RngStream(seed=7)
