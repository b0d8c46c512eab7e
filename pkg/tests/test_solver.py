"""Constrained solver: seeding, descent, domain continuation, verification."""

import numpy as np
import pytest

from nls_norm import (
    ProblemInstance,
    RadialGrid,
    SeedFailureError,
    SolverOptions,
    constraint_M,
    kinetic,
    mass,
    powers,
    solve,
    verify,
)
from nls_norm.solver import initial_guess

QUARTIC = powers([(1.0, 4.0)])


def small_instance(rho=1.0, R=3.0, n=1000):
    return ProblemInstance(N=3, rho=rho, spec=QUARTIC,
                           grid=RadialGrid(3, R, n))


def test_instance_validation():
    with pytest.raises(ValueError):
        ProblemInstance(N=4, rho=1.0, spec=QUARTIC, grid=RadialGrid(3, 3.0, 100))
    with pytest.raises(ValueError):
        ProblemInstance(N=3, rho=0.0, spec=QUARTIC, grid=RadialGrid(3, 3.0, 100))


def test_initial_guess_on_resolved_grid():
    inst = small_instance()
    u = initial_guess(inst)
    assert mass(u) <= 1.0 * (1.0 + 1e-12)
    assert mass(u) == pytest.approx(1.0, rel=1e-6)
    assert abs(constraint_M(u, QUARTIC)) < 1e-10 * kinetic(u)


def test_initial_guess_raises_on_unresolved_grid():
    # the quartic ground state at rho = 1 concentrates near lam ~ 357;
    # a coarse wide box cannot resolve any seed's fiber crossing
    inst = ProblemInstance(N=3, rho=1.0, spec=QUARTIC,
                           grid=RadialGrid(3, 30.0, 1000))
    with pytest.raises(SeedFailureError):
        initial_guess(inst)


def test_solve_recovers_from_seed_failure_by_continuation():
    inst = ProblemInstance(N=3, rho=1.0, spec=QUARTIC,
                           grid=RadialGrid(3, 30.0, 1000))
    state = solve(inst)
    assert state.converged
    assert state.lam == pytest.approx(357.094623, rel=1e-3)


def test_solve_fixed_domain():
    opts = SolverOptions(auto_domain=False)
    state = solve(small_instance(), opts)
    assert state.converged
    assert state.on_sphere
    assert state.u.grid.R == 3.0
    assert state.rho_attained == pytest.approx(1.0, rel=1e-10)
    assert state.energy > 0.0
    assert state.lam > 0.0
    assert state.iterations >= 1
    assert state.grad_norm < 1e-9
    assert len(state.energy_history) >= 1
    assert abs(state.residuals.m_residual) < 1e-8
    assert abs(state.residuals.nehari_residual) < 1e-8
    assert abs(state.residuals.pohozaev_residual) < 1e-8
    # the multiplier estimate carries the strong-form O(dr^2) error
    assert abs(state.residuals.mu_estimate) < 1e-2


def test_solve_negative_well_nonlinearity():
    # H changes sign near the origin; descent still reaches a ground state
    well = powers([(-1.0, 3.5), (1.0, 4.0)])
    inst = ProblemInstance(N=3, rho=1.0, spec=well, grid=RadialGrid(3, 3.0, 1000))
    state = solve(inst)
    assert state.converged
    assert state.lam == pytest.approx(415.39, rel=1e-2)
    assert state.energy > 0.0


def test_verify_refines_on_halved_step(quartic_state):
    rep = verify(quartic_state, QUARTIC)
    assert rep.refined_grid.n == 2 * quartic_state.u.grid.n
    assert abs(rep.original.m_residual) < 1e-8
    # the identities are discretization-stable, not grid artifacts
    assert abs(rep.refined.m_residual) < 1e-4
    assert abs(rep.refined.nehari_residual) < 1e-4
    assert abs(rep.refined.pohozaev_residual) < 1e-4
