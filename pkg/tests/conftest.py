"""
Shared fixtures for the secest test suite.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from secest.core.model import LtiSystem


@pytest.fixture
def rng():
    """Seeded generator so every test run draws the same numbers."""
    return np.random.default_rng(1234)


@pytest.fixture
def designed_system(rng):
    """
    Diagonal closed loop with distinct positive poles and a dense C, so every
    eigenvector is seen by all p sensors (s_i = p).
    """
    n, p = 3, 6
    A = np.diag([0.55, 0.7, 0.85])
    C = rng.standard_normal((p, n))
    return LtiSystem(A, np.zeros((n, 1)), C)


@pytest.fixture
def scalar_growth():
    """x(t+1) = 2 x(t), y = x."""
    return LtiSystem(np.array([[2.0]]), np.zeros((1, 1)), np.array([[1.0]]))
