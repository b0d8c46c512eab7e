"""Energy, constraint, gradients, fiber map and identity residuals."""

import math

import numpy as np
import pytest

from nls_norm import (
    FiberProjectionError,
    RadialField,
    RadialGrid,
    constraint_M,
    dilate_mass_preserving,
    dilate_plain,
    energy_J,
    fiber_dphi,
    fiber_phi,
    grad_J,
    grad_M,
    integrate,
    kinetic,
    lambda_multiplier,
    mass,
    maximize_fiber,
    powers,
    residuals,
    small_gradient_recipe,
)
from nls_norm.functionals import (
    HNonpositiveError,
    project_fiber,
    project_mass,
    r_of_u,
)
from nls_norm.oracle import gn_constant
from conftest import gaussian_mix_field, m_project, rough_field

QUARTIC = powers([(1.0, 4.0)])


def gaussian(grid, b=1.0):
    vals = np.exp(-b * grid.r**2)
    vals[-1] = 0.0
    return RadialField(grid, vals)


def test_energy_and_constraint_closed_form():
    grid = RadialGrid(3, 12.0, 800)
    u = gaussian(grid)
    k = kinetic(u)
    p4 = integrate(u.values**4, grid)
    assert energy_J(u, QUARTIC) == pytest.approx(0.5 * k - 0.25 * p4, rel=1e-13)
    # H(s) = s^4/2 for the quartic power
    assert constraint_M(u, QUARTIC) == pytest.approx(k - 0.75 * p4, rel=1e-13)


def test_gradients_match_finite_differences():
    grid = RadialGrid(3, 10.0, 500)
    rng = np.random.default_rng(7)
    for _ in range(5):
        u = gaussian_mix_field(rng, grid)
        v = rough_field(rng, grid)
        d = 1e-6

        def bump(t):
            return RadialField(grid, u.values + t * v.values)

        fd_j = (energy_J(bump(d), QUARTIC) - energy_J(bump(-d), QUARTIC)) / (2 * d)
        fd_m = (constraint_M(bump(d), QUARTIC)
                - constraint_M(bump(-d), QUARTIC)) / (2 * d)
        pair_j = integrate(grad_J(u, QUARTIC) * v.values, grid)
        pair_m = integrate(grad_M(u, QUARTIC) * v.values, grid)
        scale = max(1.0, abs(fd_j))
        assert abs(pair_j - fd_j) < 1e-5 * scale
        assert abs(pair_m - fd_m) < 1e-5 * max(1.0, abs(fd_m))


def test_r_of_u_projects_and_scales():
    grid = RadialGrid(3, 10.0, 500)
    u = gaussian(grid)
    r = r_of_u(u, QUARTIC)
    w = dilate_plain(u, r)
    assert constraint_M(w, QUARTIC) == pytest.approx(0.0, abs=1e-12 * kinetic(w))
    # plain dilation by s divides the projection scale by s
    assert r_of_u(dilate_plain(u, 2.0), QUARTIC) == pytest.approx(r / 2.0,
                                                                  rel=1e-12)
    # H < 0 near zero makes int H negative at small amplitude
    well = powers([(-1.0, 3.5), (1.0, 4.0)])
    small = RadialField(grid, 1e-3 * u.values)
    with pytest.raises(HNonpositiveError):
        r_of_u(small, well)


def test_fiber_map_at_one_and_against_exact_dilation():
    grid = RadialGrid(3, 10.0, 500)
    rng = np.random.default_rng(11)
    u = gaussian_mix_field(rng, grid)
    assert fiber_phi(u, QUARTIC, 1.0) == pytest.approx(energy_J(u, QUARTIC),
                                                       rel=1e-13)
    assert fiber_dphi(u, QUARTIC, 1.0) == pytest.approx(
        constraint_M(u, QUARTIC), rel=1e-13)
    # dilation is realized as a grid rescale, so phi matches J exactly
    for lam in (0.3, 2.5):
        v = dilate_mass_preserving(u, lam)
        assert fiber_phi(u, QUARTIC, lam) == pytest.approx(
            energy_J(v, QUARTIC), rel=1e-13)
    with pytest.raises(ValueError):
        fiber_phi(u, QUARTIC, 0.0)


def test_maximize_fiber_contracts():
    grid = RadialGrid(3, 10.0, 500)
    rng = np.random.default_rng(13)
    u = m_project(gaussian_mix_field(rng, grid), QUARTIC)
    fx = maximize_fiber(u, QUARTIC)
    assert abs(fx.lam - 1.0) < 1e-6
    assert not fx.plateau
    # equivariance: dilating by 2 halves the maximizer
    fx2 = maximize_fiber(dilate_mass_preserving(u, 2.0), QUARTIC)
    assert fx2.lam == pytest.approx(fx.lam / 2.0, rel=1e-10)
    assert fx2.phi == pytest.approx(fx.phi, rel=1e-10)
    # mass-subcritical growth has no downward crossing of phi'
    sub = powers([(1.0, 3.0)])
    with pytest.raises(FiberProjectionError):
        maximize_fiber(u, sub)


def test_lambda_multiplier_closes_nehari_identity():
    grid = RadialGrid(3, 10.0, 500)
    u = gaussian(grid)
    lam = lambda_multiplier(u, QUARTIC)
    gu = integrate(QUARTIC.eval("g", u.values) * u.values, grid)
    assert kinetic(u) + lam * mass(u) == pytest.approx(gu, rel=1e-13)
    res = residuals(u, QUARTIC, lam)
    assert res.nehari_residual == pytest.approx(0.0, abs=1e-14)


def test_residuals_fields_and_errors():
    grid = RadialGrid(3, 10.0, 500)
    u = gaussian(grid)
    res = residuals(u, QUARTIC, 1.0)
    d = res.to_dict()
    assert set(d) == {"m_residual", "nehari_residual", "pohozaev_residual",
                      "mu_estimate"}
    assert res.max_abs() >= abs(res.m_residual)
    zero = RadialField(grid, np.zeros(grid.n + 1))
    with pytest.raises(ValueError):
        residuals(zero, QUARTIC, 1.0)


def test_small_gradient_recipe_constants():
    out = small_gradient_recipe(QUARTIC, 3, 1.0)
    assert set(out) == {"eps", "C_eps", "delta", "eta"}
    assert out["eta"] == 0.0
    crit = 2.0 + 4.0 / 3.0
    c = gn_constant(3, crit)
    assert out["eps"] == pytest.approx(1.0 / (12.0 * c**crit), rel=1e-12)
    assert out["C_eps"] > 0.0
    assert out["delta"] > 0.0
    # a larger mass budget shrinks eps and hence delta
    big = small_gradient_recipe(QUARTIC, 3, 8.0)
    assert big["eps"] < out["eps"]
    assert big["delta"] < out["delta"]
    with pytest.raises(ValueError):
        small_gradient_recipe(powers([(1.0, 3.0)]), 3, 1.0)


def test_projections():
    grid = RadialGrid(3, 10.0, 500)
    rng = np.random.default_rng(17)
    u = gaussian_mix_field(rng, grid)
    v = project_mass(u, 2.5)
    assert mass(v) == pytest.approx(2.5, rel=1e-14)
    w, fx = project_fiber(v, QUARTIC)
    assert constraint_M(w, QUARTIC) == pytest.approx(
        0.0, abs=1e-10 * kinetic(w))
    assert mass(w) == pytest.approx(2.5, rel=1e-12)
    assert fx.lam > 0.0
    with pytest.raises(ValueError):
        project_mass(RadialField(grid, np.zeros(grid.n + 1)), 1.0)
