"""Discrete radial calculus: quadrature, stiffness, dilation, rearrangement."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from nls_norm import (
    RadialField,
    RadialGrid,
    dilate_mass_preserving,
    dilate_plain,
    integrate,
    kinetic,
    laplacian,
    mass,
    precondition,
    read_field,
    rearrange,
    write_field,
)
from conftest import gaussian_mix_field as gaussian_mix, rough_field


def gaussian(grid, b=1.0):
    vals = np.exp(-b * grid.r**2)
    vals[-1] = 0.0
    return RadialField(grid, vals)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(2, 10.0, 100)
    with pytest.raises(ValueError):
        RadialGrid(3, -1.0, 100)
    with pytest.raises(ValueError):
        RadialGrid(3, 10.0, 101)  # Simpson needs even n


def test_field_validation():
    grid = RadialGrid(3, 10.0, 100)
    with pytest.raises(ValueError):
        RadialField(grid, np.zeros(grid.n))
    with pytest.raises(ValueError):
        RadialField(grid, np.full(grid.n + 1, 1.0))  # u(R) != 0
    with pytest.raises(ValueError):
        RadialField(grid, np.full(grid.n + 1, np.nan))


def test_quadrature_against_quad():
    grid = RadialGrid(3, 12.0, 600)
    u = gaussian(grid, 1.0)
    ref_mass = 4.0 * math.pi * quad(lambda r: r**2 * math.exp(-2 * r**2), 0, 12)[0]
    assert mass(u) == pytest.approx(ref_mass, rel=1e-10)
    ref_kin = 4.0 * math.pi * quad(
        lambda r: r**2 * (2 * r * math.exp(-r**2)) ** 2, 0, 12)[0]
    # the midpoint-flux stiffness is second order in dr
    assert kinetic(u) == pytest.approx(ref_kin, rel=1e-4)


def test_green_identity_on_smooth_fields():
    grid = RadialGrid(3, 12.0, 4000)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = gaussian_mix(rng, grid)
        lhs = integrate(-laplacian(u) * u.values, grid)
        assert lhs == pytest.approx(kinetic(u), rel=1e-6)


def test_laplacian_gaussian_accuracy():
    grid = RadialGrid(3, 10.0, 2000)
    u = gaussian(grid, 1.0)
    # the spherical flux stencil carries an O(1/i^2) consistency error at
    # the first nodes; away from the origin it is second order in dr
    r = grid.r[50:-1]
    exact = (4.0 * r**2 - 6.0) * np.exp(-r**2)
    got = laplacian(u)[50:-1]
    assert np.max(np.abs(got - exact)) < 2e-4
    # origin limit: Laplacian of exp(-r^2) at 0 is -2N
    assert laplacian(u)[0] == pytest.approx(-6.0, abs=2e-4)
    # linearity holds up to rounding
    v = gaussian(grid, 2.0)
    combo = RadialField(grid, 1.5 * u.values - 0.25 * v.values)
    np.testing.assert_allclose(
        laplacian(combo), 1.5 * laplacian(u) - 0.25 * laplacian(v),
        rtol=1e-11, atol=1e-11)


def test_dilations_exact_in_grid_arithmetic():
    grid = RadialGrid(3, 10.0, 500)
    u = gaussian(grid, 2.0)
    for lam in (0.17, 1.0, 3.7):
        v = dilate_mass_preserving(u, lam)
        assert mass(v) == pytest.approx(mass(u), rel=1e-13)
        assert kinetic(v) == pytest.approx(lam**2 * kinetic(u), rel=1e-13)
        w = dilate_plain(u, lam)
        assert mass(w) == pytest.approx(lam**-3 * mass(u), rel=1e-13)
        assert kinetic(w) == pytest.approx(lam**-1 * kinetic(u), rel=1e-13)
    with pytest.raises(ValueError):
        dilate_mass_preserving(u, 0.0)
    with pytest.raises(ValueError):
        dilate_plain(u, -2.0)


def test_rearrange_identity_and_idempotent():
    grid = RadialGrid(3, 10.0, 400)
    u = gaussian(grid, 1.0)
    np.testing.assert_array_equal(rearrange(u).values, u.values)
    rng = np.random.default_rng(1)
    v = rough_field(rng, grid)
    once = rearrange(v)
    twice = rearrange(once)
    np.testing.assert_array_equal(once.values, twice.values)


def test_rearrange_monotone_and_kinetic():
    grid = RadialGrid(3, 10.0, 400)
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = rough_field(rng, grid)
        v = rearrange(u)
        assert np.all(np.diff(v.values) <= 1e-14)
        assert np.all(v.values >= 0.0)
        assert kinetic(v) <= kinetic(u) * (1 + 1e-12)


def test_rearrange_exact_on_signed_monotone_envelope():
    grid = RadialGrid(3, 10.0, 400)
    rng = np.random.default_rng(3)
    env = np.cumsum(rng.uniform(0, 1, grid.n + 1)[::-1])[::-1]
    vals = rng.choice([-1.0, 1.0], grid.n + 1) * env
    vals[-1] = 0.0
    u = RadialField(grid, vals)
    v = rearrange(u)
    np.testing.assert_array_equal(v.values, np.abs(u.values))


def test_precondition_solves_shifted_equation():
    grid = RadialGrid(3, 10.0, 500)
    rng = np.random.default_rng(4)
    res = rough_field(rng, grid).values
    z = precondition(res, grid, 2.5)
    # weak form: <(shift - Lap) z, z> = <res, z> in grid arithmetic
    lhs = 2.5 * mass(z) + kinetic(z)
    rhs = integrate(res * z.values, grid)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    with pytest.raises(ValueError):
        precondition(res, grid, 0.0)


def test_field_io_roundtrip(tmp_path):
    grid = RadialGrid(3, 10.0, 200)
    u = gaussian(grid, 1.5)
    for fmt in ("binary", "text"):
        path = tmp_path / ("f." + fmt)
        write_field(u, str(path), fmt=fmt)
        v = read_field(str(path))
        assert v.grid == grid
        tol = 0.0 if fmt == "binary" else 1e-12
        np.testing.assert_allclose(v.values, u.values, atol=tol, rtol=tol)
