"""Shared helpers for the test modules."""

import math

import numpy as np

from manegeo.config import Configuration
from manegeo.solver import solve_geodesic

ACCEPTANCE = {}

ENERGY_TOL = 1e-10


def solve_checked(x, y, F, lam, opts=None, initial_path=None):
    """solve_geodesic plus the energy relation every converged result must satisfy."""
    result = solve_geodesic(x, y, F, lam, opts, initial_path)
    if result.converged:
        assert result.energy_residual < ENERGY_TOL
    return result


def config(bodies, masses=None):
    return Configuration(np.asarray(bodies, dtype=float), masses)


def pair_direction(N=2, d=2):
    """Unit direction with bodies spread evenly on a line, zero centre of mass."""
    b = np.zeros((N, d))
    b[:, 0] = np.arange(N) - (N - 1) / 2.0
    b /= math.sqrt(np.sum(b**2))
    return Configuration(b)
