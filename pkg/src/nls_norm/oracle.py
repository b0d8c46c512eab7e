"""Independent ground truth for the constrained solver.

Three ingredients that do not share code with the minimizer: a classical
shooting method for the fixed-multiplier radial ODE u'' + (N-1)/r u' =
lam*u - g(u), the optimal Gagliardo-Nirenberg constants computed from the
shooting extremal, and the closed-form scaling laws that map the lam = 1
pure-power ground state to any prescribed mass.
"""

import math
import os
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import kv

from . import nonlinearity as nl
from .radial import RadialField, RadialGrid, integrate, kinetic, mass

__all__ = [
    "ShootingResult",
    "ScalingLaw",
    "shoot",
    "gn_constant",
    "power_scaling",
    "sobolev_constant",
    "default_grid",
    "cache_path",
]

_cache_lock = threading.Lock()


def default_grid(N):
    """Default oracle grid: R = 30, n = 4000."""
    return RadialGrid(N, 30.0, 4000)


def sobolev_constant(N):
    """Optimal constant C in |u|_{2^*} <= C |grad u|_2 (closed form)."""
    s = math.pi * N * (N - 2.0) * (math.gamma(N / 2.0) / math.gamma(float(N))) ** (2.0 / N)
    return s**-0.5


@dataclass
class ShootingResult:
    """Radial fixed-lam ground state found by bisection on u(0)."""

    profile: RadialField
    u0: float
    lam: float
    crossings: int
    decay_ok: bool
    ode_residual: float


@dataclass
class ScalingLaw:
    """Pure-power family u_lam = lam^{1/(p-2)} w(sqrt(lam) x).

    J(u_lam) = base_energy * lam^alpha and |u_lam|_2^2 = base_mass *
    lam^beta with alpha = 2/(p-2) - N/2 + 1 and beta = 2/(p-2) - N/2;
    beta < 0 in the mass-supercritical range.
    """

    p: float
    N: int
    alpha: float
    beta: float
    base_mass: float
    base_energy: float

    def lam_of_rho(self, rho):
        return (self.base_mass / rho) ** (-1.0 / self.beta)

    def c_of_rho(self, rho):
        return self.base_energy * (rho / self.base_mass) ** (self.alpha / self.beta)


def _series_start(spec, N, lam, s, r):
    """Quartic even series of the regular solution near the origin."""
    f = lam * s - spec.eval("g", s)
    fp = lam - spec.eval("dg", s)
    a = f / (2.0 * N)
    b = fp * a / (4.0 * (N + 2.0))
    u = s + a * r**2 + b * r**4
    du = 2.0 * a * r + 4.0 * b * r**3
    return u, du


def _integrate_from(spec, N, lam, s, r_end, rtol):
    """Integrate the radial ODE from a series start; returns the ivp result."""
    r0 = 1e-3
    u0, du0 = _series_start(spec, N, lam, s, r0)

    def rhs(r, y):
        return [y[1], lam * y[0] - spec.eval("g", y[0]) - (N - 1.0) / r * y[1]]

    def cross(r, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1.0

    def blow(r, y):
        return y[0] * y[0] - 100.0 * s * s

    blow.terminal = True
    blow.direction = 1.0

    return solve_ivp(
        rhs,
        (r0, r_end),
        [u0, du0],
        method="DOP853",
        rtol=rtol,
        atol=1e-14 * s,
        events=(cross, blow),
        dense_output=True,
    )


def _classify(sol, lam, s):
    """"low" when the shot diverges positively, "high" when it crosses zero."""
    if sol.t_events[0].size:  # crossed zero
        return "high"
    if sol.t_events[1].size:  # blew up; positive blow-up means u(0) too small
        r_ev = sol.t_events[1][0]
        return "low" if sol.sol(r_ev)[0] > 0 else "high"
    u_end, du_end = sol.y[0][-1], sol.y[1][-1]
    growing = du_end + math.sqrt(lam) * u_end
    return "low" if growing > 0 else "high"


def shoot(spec, N, lam, grid=None):
    """Locate the positive decaying solution by bisection on u(0).

    The shot classification ("crosses zero" against "diverges positively")
    brackets u(0); 200 bisection steps (with an early stop at floating-point
    resolution) pin it down.  Beyond the radius where u falls below
    1e-5 u(0) the profile is continued by the exact linearized tail
    C r^{1-N/2} K_{N/2-1}(sqrt(lam) r), which removes the growing-mode
    contamination that bisection cannot suppress.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if grid is None:
        grid = default_grid(N)
    r_end = grid.R

    # empirical bracket scan
    s_scan = np.geomspace(1e-6, 1e6, 49)
    lo = hi = None
    prev = None
    for s in s_scan:
        cls = _classify(_integrate_from(spec, N, lam, s, r_end, 1e-8), lam, s)
        if cls == "high" and prev is not None and prev[1] == "low":
            lo, hi = prev[0], s
            break
        prev = (s, cls)
    if lo is None:
        raise RuntimeError("no-bracket: no low/high dichotomy for u(0) in [1e-6, 1e6]")

    for _ in range(200):
        mid = math.sqrt(lo * hi)
        cls = _classify(_integrate_from(spec, N, lam, mid, r_end, 1e-10), lam, mid)
        if cls == "low":
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    s_star = math.sqrt(lo * hi)

    sol = _integrate_from(spec, N, lam, s_star, r_end, 1e-13)
    r_reach = sol.t[-1]

    # matching radius: first r with u <= 1e-5 u(0), before any event
    thresh = 1e-5 * s_star
    rr = np.linspace(sol.t[0], r_reach, 4001)
    uu = sol.sol(rr)[0]
    below = np.nonzero(uu <= thresh)[0]
    if below.size:
        i = below[0]
        a_r, b_r = rr[max(i - 1, 0)], rr[i]
        for _ in range(80):
            m_r = 0.5 * (a_r + b_r)
            if sol.sol(m_r)[0] <= thresh:
                b_r = m_r
            else:
                a_r = m_r
        r_match = b_r
    else:
        r_match = r_reach

    kappa = math.sqrt(lam)
    order = N / 2.0 - 1.0

    def tail(r):
        r = np.asarray(r, dtype=float)
        return r ** (1.0 - N / 2.0) * kv(order, kappa * r)

    u_match = float(sol.sol(r_match)[0])
    c_tail = u_match / float(tail(r_match)) if r_match < r_reach else 0.0

    r = grid.r
    vals = np.zeros_like(r)
    r0 = sol.t[0]
    near = r <= r0
    vals[near], _ = _series_start(spec, N, lam, s_star, r[near])
    mid_mask = (r > r0) & (r <= r_match)
    vals[mid_mask] = sol.sol(r[mid_mask])[0]
    far = r > r_match
    if c_tail:
        vals[far] = c_tail * tail(r[far])
    u_boundary = float(vals[-1])
    vals[-1] = 0.0
    profile = RadialField(grid, vals)

    inner = vals[vals > 0]
    crossings = int(np.sum(np.diff(np.sign(inner)) != 0)) if inner.size else 0
    decay_ok = abs(u_boundary) < 1e-10

    # strong-form residual: u'' from a 4th-order difference of the dense u'
    res_max = 0.0
    h = 1e-3
    pts = r[(r > r0 + 2 * h) & (r < r_match - 2 * h)]
    if pts.size:
        dp2 = sol.sol(pts + 2 * h)[1]
        dp1 = sol.sol(pts + h)[1]
        dm1 = sol.sol(pts - h)[1]
        dm2 = sol.sol(pts - 2 * h)[1]
        upp = (-dp2 + 8.0 * dp1 - 8.0 * dm1 + dm2) / (12.0 * h)
        uval = sol.sol(pts)[0]
        dval = sol.sol(pts)[1]
        res = upp + (N - 1.0) / pts * dval - lam * uval + spec.eval("g", uval)
        res_max = float(np.max(np.abs(res)))
    if c_tail:
        # the tail solves the linear equation exactly; only g(u) remains
        res_max = max(res_max, float(np.max(np.abs(spec.eval("g", vals[far])))) if far.any() else 0.0)

    return ShootingResult(
        profile=profile,
        u0=float(s_star),
        lam=float(lam),
        crossings=crossings,
        decay_ok=bool(decay_ok),
        ode_residual=res_max,
    )


# -- persistent constant cache ---------------------------------------------


def cache_path():
    """Cache file location; override with the NLS_NORM_CACHE variable."""
    env = os.environ.get("NLS_NORM_CACHE")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "nls-norm", "oracle-cache.txt")


def _cache_key(N, p, R, n):
    return "%d %.12g %.12g %d" % (N, p, R, n)


def _cache_read():
    path = cache_path()
    rows = {}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if len(parts) != 8:
                    continue
                key = " ".join(parts[:4])
                rows[key] = tuple(float(x) for x in parts[4:])
    return rows


def _cache_append(key, values):
    path = cache_path()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("%s %.17g %.17g %.17g %.17g\n" % (key, *values))


def _power_base(N, p, R, n):
    """(C, u0, base_mass, base_energy) for the pure power p at lam = 1."""
    key = _cache_key(N, p, R, n)
    with _cache_lock:
        rows = _cache_read()
        if key in rows:
            return rows[key]
    spec = nl.powers([(1.0, p)])
    res = shoot(spec, N, 1.0, RadialGrid(N, R, n))
    w = res.profile
    delta = N * (0.5 - 1.0 / p)
    lp = integrate(np.abs(w.values) ** p, w.grid) ** (1.0 / p)
    grad2 = math.sqrt(kinetic(w))
    l2 = math.sqrt(mass(w))
    c = lp / (grad2**delta * l2 ** (1.0 - delta))
    base_mass = mass(w)
    base_energy = 0.5 * kinetic(w) - integrate(spec.eval("G", w.values), w.grid)
    values = (c, res.u0, base_mass, base_energy)
    with _cache_lock:
        rows = _cache_read()
        if key not in rows:
            _cache_append(key, values)
    return values


def gn_constant(N, p, R=30.0, n=4000):
    """Optimal Gagliardo-Nirenberg constant C_{N,p} from the shooting extremal.

    C = |w|_p / (|grad w|_2^delta |w|_2^{1-delta}) with delta = N(1/2 - 1/p)
    and w the lam = 1 pure-power ground state.  Values are cached on disk
    keyed by (N, p, R, n).
    """
    if not (2.0 < p < nl.sobolev_critical_exponent(N)):
        raise ValueError("p must lie in (2, 2^*)")
    return _power_base(N, p, R, n)[0]


def power_scaling(p, N, R=30.0, n=4000):
    """Scaling law of the pure-power family; p must be mass-supercritical."""
    crit = nl.mass_critical_exponent(N)
    sob = nl.sobolev_critical_exponent(N)
    if not (crit < p < sob):
        raise ValueError("power_scaling needs p in (2_*, 2^*)")
    _, _, base_mass, base_energy = _power_base(N, p, R, n)
    alpha = 2.0 / (p - 2.0) - N / 2.0 + 1.0
    beta = 2.0 / (p - 2.0) - N / 2.0
    return ScalingLaw(p=p, N=N, alpha=alpha, beta=beta,
                      base_mass=base_mass, base_energy=base_energy)
