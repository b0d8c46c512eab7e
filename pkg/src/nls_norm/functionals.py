"""Energy, constraint, gradients, fiber map and identity residuals.

The energy is J(u) = 1/2 |grad u|_2^2 - int G(u); the dilation-invariant
constraint is M(u) = |grad u|_2^2 - (N/2) int H(u), whose zero set is the
Pohozaev-Nehari manifold.  The fiber map phi(lam) = J(lam^{N/2} u(lam r))
is evaluated analytically (the dilation only rescales the argument of G and
the measure), never by resampling, so the line search sees a smooth merit.
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import nonlinearity as nl
from .radial import integrate, kinetic, mass, stiffness_apply

__all__ = [
    "IdentityResiduals",
    "HNonpositiveError",
    "FiberProjectionError",
    "FiberMap",
    "FiberMax",
    "energy_J",
    "constraint_M",
    "grad_J",
    "grad_M",
    "r_of_u",
    "fiber_phi",
    "fiber_dphi",
    "maximize_fiber",
    "lambda_multiplier",
    "residuals",
    "small_gradient_recipe",
]


class HNonpositiveError(ValueError):
    """The manifold projection r(u) is undefined because int H(u) <= 0."""


class FiberProjectionError(RuntimeError):
    """phi' has no +to- sign change on the bracketing grid."""


def energy_J(u, spec):
    """J(u) = 1/2 kinetic(u) - int G(u)."""
    return 0.5 * kinetic(u) - integrate(spec.eval("G", u.values), u.grid)


def constraint_M(u, spec):
    """M(u) = kinetic(u) - (N/2) int H(u)."""
    return kinetic(u) - 0.5 * u.grid.N * integrate(spec.eval("H", u.values), u.grid)


def grad_J(u, spec):
    """Weighted-L^2 gradient of J: -Laplacian(u) - g(u) at interior nodes."""
    grid = u.grid
    y = stiffness_apply(u.values, grid)
    g = np.zeros_like(y)
    g[1:-1] = y[1:-1] / grid.w[1:-1] - spec.eval("g", u.values[1:-1])
    return g


def grad_M(u, spec):
    """Weighted-L^2 gradient of M: -2 Laplacian(u) - (N/2) h(u)."""
    grid = u.grid
    y = stiffness_apply(u.values, grid)
    g = np.zeros_like(y)
    g[1:-1] = 2.0 * y[1:-1] / grid.w[1:-1] - 0.5 * grid.N * spec.eval("h", u.values[1:-1])
    return g


def r_of_u(u, spec):
    """Plain-dilation projection scale r(u) = ((N/2) int H / kinetic)^{1/2}."""
    ih = integrate(spec.eval("H", u.values), u.grid)
    if ih <= 0:
        raise HNonpositiveError("int H(u) <= 0; projection undefined")
    k = kinetic(u)
    if k <= 0:
        raise ValueError("kinetic(u) must be positive")
    return math.sqrt(0.5 * u.grid.N * ih / k)


class FiberMap:
    """phi and phi' along the mass-preserving dilation orbit of a field.

    For sum-of-powers specs the integrals reduce to fixed moments
    int |u|^{p_k}, so each phi evaluation is a few scalar power laws;
    otherwise G and H are re-evaluated at the rescaled argument.
    """

    def __init__(self, u, spec):
        self.u = u
        self.spec = spec
        self.N = u.grid.N
        self.K = kinetic(u)
        if spec.is_sum_of_powers:
            self._mom = [
                (t.coefficient, t.exponent,
                 integrate(np.abs(u.values) ** t.exponent, u.grid))
                for t in spec.terms
            ]
        else:
            self._mom = None

    def phi(self, lam):
        if self._mom is not None:
            s = sum(
                (c / p) * m * lam ** (self.N * (p - 2.0) / 2.0)
                for c, p, m in self._mom
            )
        else:
            t = lam ** (self.N / 2.0)
            s = lam ** (-self.N) * integrate(
                self.spec.eval("G", t * self.u.values), self.u.grid
            )
        return 0.5 * lam**2 * self.K - s

    def dphi(self, lam):
        if self._mom is not None:
            s = sum(
                0.5 * self.N * (c * (p - 2.0) / p) * m
                * lam ** (self.N * (p - 2.0) / 2.0 - 1.0)
                for c, p, m in self._mom
            )
        else:
            t = lam ** (self.N / 2.0)
            s = 0.5 * self.N * lam ** (-self.N - 1.0) * integrate(
                self.spec.eval("H", t * self.u.values), self.u.grid
            )
        return lam * self.K - s

    def h_ratio(self, lam):
        """int H(lam^{N/2} u) * lam^{-N-2}; nondecreasing in lam under (A4)."""
        t = lam ** (self.N / 2.0)
        if self._mom is not None:
            return sum(
                (c * (p - 2.0) / p) * m * lam ** (self.N * (p - 2.0) / 2.0 - 2.0)
                for c, p, m in self._mom
            )
        return lam ** (-self.N - 2.0) * integrate(
            self.spec.eval("H", t * self.u.values), self.u.grid
        )


def fiber_phi(u, spec, lam):
    """phi(lam) = J(lam^{N/2} u(lam r)) by analytic change of variables."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return FiberMap(u, spec).phi(lam)


def fiber_dphi(u, spec, lam):
    """phi'(lam); fiber_dphi(u, 1) == constraint_M(u)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return FiberMap(u, spec).dphi(lam)


FiberMax = namedtuple("FiberMax", ["lam", "phi", "plateau"])

_FIBER_GRID = np.geomspace(1e-4, 1e4, 321)


def maximize_fiber(u, spec):
    """Smallest maximizer of the fiber map.

    Brackets the +to- sign change of phi' on a geometric grid in
    [1e-4, 1e4], then bisects to |phi'| < 1e-12 (1 + |phi|).  When phi is
    flat at the maximizer (a plateau of maximizers), the left endpoint is
    returned and the plateau flag is set.
    """
    fm = FiberMap(u, spec)
    d = np.array([fm.dphi(l) for l in _FIBER_GRID])
    pos = d > 0
    bracket = None
    for i in range(len(d) - 1):
        if pos[i] and not pos[i + 1]:
            bracket = (_FIBER_GRID[i], _FIBER_GRID[i + 1])
            break
    if bracket is None:
        raise FiberProjectionError(
            "no-sign-change: phi' does not cross zero downwards on [1e-4, 1e4]"
        )
    lam = brentq(fm.dphi, bracket[0], bracket[1], xtol=1e-15, rtol=8.9e-16)
    phi_star = fm.phi(lam)
    tol = 1e-12 * (1.0 + abs(phi_star))
    if abs(fm.dphi(lam)) > tol:
        # flat phi': slide to any point meeting the stationarity tolerance
        for cand in np.linspace(bracket[0], bracket[1], 65):
            if abs(fm.dphi(cand)) <= tol:
                lam = float(cand)
                phi_star = fm.phi(lam)
                break
    plateau = abs(fm.phi(lam * (1.0 + 1e-3)) - phi_star) <= tol
    if plateau:
        # walk to the smallest lam that still attains the maximum value
        lo = None
        below = _FIBER_GRID[_FIBER_GRID < lam]
        for cand in below[::-1]:
            if fm.phi(cand) < phi_star - tol:
                lo = float(cand)
                break
        if lo is not None:
            hi = lam
            for _ in range(200):
                mid = math.sqrt(lo * hi)
                if fm.phi(mid) >= phi_star - tol:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-12 * hi:
                    break
            lam = hi
        else:
            lam = float(_FIBER_GRID[0])
    return FiberMax(float(lam), float(fm.phi(lam)), bool(plateau))


def lambda_multiplier(u, spec):
    """Multiplier from the Nehari identity: (int g(u)u - kinetic)/mass."""
    m = mass(u)
    if m <= 0:
        raise ValueError("mass(u) must be positive")
    gu = integrate(spec.eval("g", u.values) * u.values, u.grid)
    return (gu - kinetic(u)) / m


@dataclass
class IdentityResiduals:
    """Normalized violations of the solution identities.

    m_residual is M(u)/kinetic, nehari_residual and pohozaev_residual are
    the corresponding identity defects over kinetic, and mu_estimate is the
    least-squares coefficient of the manifold-gradient direction in the
    strong-form residual (zero for a true normalized ground state).
    """

    m_residual: float
    nehari_residual: float
    pohozaev_residual: float
    mu_estimate: float

    def to_dict(self):
        return {
            "m_residual": self.m_residual,
            "nehari_residual": self.nehari_residual,
            "pohozaev_residual": self.pohozaev_residual,
            "mu_estimate": self.mu_estimate,
        }

    def max_abs(self):
        return max(abs(self.m_residual), abs(self.nehari_residual),
                   abs(self.pohozaev_residual), abs(self.mu_estimate))


def residuals(u, spec, lam):
    """Compute IdentityResiduals of (u, lam) for the given nonlinearity."""
    grid = u.grid
    k = kinetic(u)
    if k <= 0:
        raise ValueError("kinetic(u) must be positive")
    sob = nl.sobolev_critical_exponent(grid.N)
    m2 = mass(u)
    gu = integrate(spec.eval("g", u.values) * u.values, u.grid)
    big_g = integrate(spec.eval("G", u.values), u.grid)
    m_res = constraint_M(u, spec) / k
    nehari = (k + lam * m2 - gu) / k
    poho = (k - sob * (big_g - 0.5 * lam * m2)) / k

    y = stiffness_apply(u.values, grid)
    neg_lap = np.zeros_like(y)
    neg_lap[1:-1] = y[1:-1] / grid.w[1:-1]
    strong = neg_lap + lam * u.values - spec.eval("g", u.values)
    direction = neg_lap - 0.25 * grid.N * spec.eval("h", u.values)
    dd = integrate(direction * direction, grid)
    mu = -integrate(strong * direction, grid) / dd if dd > 0 else 0.0
    return IdentityResiduals(m_res, nehari, poho, mu)


def small_gradient_recipe(spec, N, rho, eta=None):
    """Constants (eps, C_eps, delta) of the small-gradient energy bound.

    With eps = 1/(4N C_{N,2_*}^{2_*} rho^{2/N}), C_eps the smallest
    constant with G(s) <= (eps + eta)|s|^{2_*} + C_eps|s|^{2^*}, and
    delta = (1/(4N C_eps C_{N,2^*}^{2^*}))^{(N-2)/4}, every u in the mass
    ball with |grad u|_2 <= delta satisfies J(u) >= |grad u|_2^2 / (2N).
    """
    from .oracle import gn_constant, sobolev_constant

    crit = nl.mass_critical_exponent(N)
    sob = nl.sobolev_critical_exponent(N)
    if eta is None:
        eta = nl.estimate_eta(spec, N)
    if not (0.0 <= eta < math.inf):
        raise ValueError("recipe needs a finite nonnegative eta")
    c_crit = gn_constant(N, crit)
    eps = 1.0 / (4.0 * N * c_crit**crit * rho ** (2.0 / N))
    s = np.geomspace(1e-8, 1e8, 4001)
    excess = spec.eval("G", s) - (eps + eta) * s**crit
    c_eps = float(np.max(np.maximum(excess, 0.0) / s**sob))
    c_sob = sobolev_constant(N)
    delta = (1.0 / (4.0 * N * c_eps * c_sob**sob)) ** ((N - 2.0) / 4.0)
    return {"eps": eps, "C_eps": c_eps, "delta": delta, "eta": eta}


def project_mass(u, rho):
    """Amplitude rescale of u onto the mass sphere of radius sqrt(rho)."""
    from .radial import RadialField

    m = mass(u)
    if m <= 0:
        raise ValueError("cannot rescale the zero field")
    return RadialField(u.grid, u.values * math.sqrt(rho / m))


def project_fiber(u, spec):
    """Dilate u onto the constraint manifold via the fiber maximizer."""
    from .radial import dilate_mass_preserving

    fx = maximize_fiber(u, spec)
    if abs(fx.lam - 1.0) < 1e-13:
        return u, fx
    return dilate_mass_preserving(u, fx.lam), fx
