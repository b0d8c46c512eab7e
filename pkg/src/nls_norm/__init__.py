"""Normalized ground states of -Laplace(u) + lambda*u = g(u) on R^N.

Computes minimizers of the energy J(u) = 1/2 |grad u|^2 - int G(u) over
the intersection of the L^2 ball of radius sqrt(rho) with the
Pohozaev-Nehari manifold M(u) = 0, for nonlinearities with at least
mass-critical growth, on a radial grid.
"""

from .energymap import (EnergyMapPoint, InsufficientSpanError, asymptotics,
                        check_monotone, sweep)
from .functionals import (
    FiberProjectionError,
    HNonpositiveError,
    IdentityResiduals,
    constraint_M,
    energy_J,
    fiber_dphi,
    fiber_phi,
    grad_J,
    grad_M,
    lambda_multiplier,
    maximize_fiber,
    project_fiber,
    project_mass,
    residuals,
    small_gradient_recipe,
)
from .nonlinearity import (
    AssumptionReport,
    NonlinearitySpec,
    PowerTerm,
    build_example,
    check_assumptions,
    estimate_eta,
    mass_critical_exponent,
    powers,
    preceq,
    rho_threshold,
    sobolev_critical_exponent,
)
from .oracle import ScalingLaw, ShootingResult, gn_constant, power_scaling, shoot, sobolev_constant
from .radial import (
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
from .solver import (
    GroundState,
    ProblemInstance,
    SeedFailureError,
    SolverOptions,
    initial_guess,
    solve,
    verify,
)

__version__ = "0.1.0"
