"""Shared fixtures and field generators for the test suite."""

import numpy as np
import pytest
from scipy.optimize import brentq

from nls_norm import RadialField, RadialGrid, constraint_M, powers
from nls_norm.solver import ProblemInstance, solve


def gaussian_mix_field(rng, grid, terms=(1, 4), width=(1.0, 6.0)):
    """Random sum of origin-centered Gaussians; smooth and decaying."""
    vals = np.zeros(grid.n + 1)
    for _ in range(rng.integers(*terms)):
        vals += rng.standard_normal() * np.exp(-rng.uniform(*width) * grid.r**2)
    vals[-1] = 0.0
    return RadialField(grid, vals)


def rough_field(rng, grid, modes=6, decay=2.0):
    """Random oscillatory field with a decaying envelope, zero at R."""
    x = grid.r / grid.R
    vals = np.zeros(grid.n + 1)
    for j in range(rng.integers(1, modes)):
        vals += rng.standard_normal() * np.cos((j + 0.5) * np.pi * x)
    vals *= np.exp(-decay * x**2) * (1.0 - x)
    vals[-1] = 0.0
    return RadialField(grid, vals)


def m_scale(u, spec):
    """Amplitude t with M(t*u) = 0, by exact bracketing on the grid."""

    def f(t):
        return constraint_M(RadialField(u.grid, t * u.values), spec)

    return brentq(f, 1e-6, 1e6, xtol=1e-14, rtol=8.9e-16)


def m_project(u, spec):
    """Place u on the manifold by amplitude scaling (grid-exact M = 0)."""
    return RadialField(u.grid, m_scale(u, spec) * u.values)


@pytest.fixture(scope="session")
def quartic_state():
    """Converged reference state for (N=3, p=4, rho=1, R=30, n=4000)."""
    spec = powers([(1.0, 4.0)])
    grid = RadialGrid(3, 30.0, 4000)
    inst = ProblemInstance(N=3, rho=1.0, spec=spec, grid=grid)
    return solve(inst)
