"""Sampling of the ground-state energy map rho -> c(rho) = inf J on S cap M.

A sweep runs one solve per mass.  Warm-started mode is sequential: each
point starts from the previous converged profile transferred to the next
grid and rescaled to the next mass.  Cold mode solves every point from the
default seed and may fan out over processes, since the points are
independent.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .functionals import FiberProjectionError, lambda_multiplier, project_fiber, project_mass
from .radial import RadialField, RadialGrid, mass
from .solver import SeedFailureError, solve

__all__ = [
    "EnergyMapPoint",
    "InsufficientSpanError",
    "sweep",
    "check_monotone",
    "asymptotics",
]


@dataclass
class EnergyMapPoint:
    """One sampled point of the energy map."""

    rho: float
    c: float
    lam: float
    converged: bool
    grad_norm: float
    note: str = ""


class InsufficientSpanError(ValueError):
    """Too few converged points, or too narrow a mass range, to fit a slope."""


def _transfer(u, grid, rho):
    """Move a profile to another grid of the same node count, mass-rescaled.

    Copying node values index by index is an exact plain dilation
    u(r * R_old/R_new); the subsequent fiber projection absorbs the scale
    change, so no interpolation error enters the warm start.
    """
    if grid.n == u.grid.n:
        vals = u.values.copy()
    else:
        vals = np.interp(grid.r / grid.R, u.grid.r / u.grid.R, u.values)
        vals[-1] = 0.0
    return project_mass(RadialField(grid, vals), rho)


def _adapted_grid(template_grid, lam_hat):
    """Grid whose radius tracks the decay scale 25/sqrt(lam)."""
    radius = 25.0 / math.sqrt(lam_hat)
    radius = min(max(radius, 1e-8), 1e6)
    return RadialGrid(template_grid.N, radius, template_grid.n)


def _solve_point(template, rho, opts, u0):
    inst = replace(template, rho=rho)
    try:
        state = solve(inst, opts, u0=u0)
    except (SeedFailureError, FiberProjectionError, ValueError) as exc:
        return None, EnergyMapPoint(rho, math.nan, math.nan, False, math.nan,
                                    note=str(exc))
    note = "" if state.converged else "non-converged"
    return state, EnergyMapPoint(rho, state.energy, state.lam, state.converged,
                                 state.grad_norm, note=note)


def _cold_point(args):
    template, rho, opts = args
    return _solve_point(template, rho, opts, None)[1]


def sweep(template, rho_list, parallelism=1, warm_start=True, opts=None,
          auto_grid=False, rho_star=math.inf):
    """Solve the instance template at each mass; points sorted by rho.

    Masses at or above rho_star are flagged inadmissible without solving.
    Per-point solver failures are flagged in the note and the sweep
    continues.  auto_grid (warm mode only) re-centers the truncation radius
    on the decay scale of the incoming multiplier estimate, which keeps
    widely scaled sweeps resolved on a fixed node budget.
    """
    rho_list = [float(r) for r in rho_list]
    points = {}
    admissible = []
    for rho in rho_list:
        if rho >= rho_star:
            points[rho] = EnergyMapPoint(rho, math.nan, math.nan, False,
                                         math.nan, note="inadmissible")
        else:
            admissible.append(rho)

    if not warm_start and parallelism > 1 and len(admissible) > 1:
        with ProcessPoolExecutor(max_workers=int(parallelism)) as pool:
            for pt in pool.map(_cold_point,
                               [(template, r, opts) for r in admissible]):
                points[pt.rho] = pt
    elif not warm_start:
        for rho in admissible:
            points[rho] = _solve_point(template, rho, opts, None)[1]
    else:
        prev = None
        grid = template.grid
        for k, rho in enumerate(admissible):
            u0 = None
            if prev is not None:
                if auto_grid:
                    lam_hat = _warm_lambda(prev.u, template.spec, rho)
                    if lam_hat is not None:
                        grid = _adapted_grid(template.grid, lam_hat)
                try:
                    u0 = _transfer(prev.u, grid, rho)
                except (ValueError, FiberProjectionError):
                    u0 = None
            inst = replace(template, grid=grid)
            state, pt = _solve_point(inst, rho, opts, u0)
            if k == 0 and auto_grid and state is not None and state.converged:
                # re-center the first grid once the multiplier is known
                better = _adapted_grid(template.grid, state.lam)
                if not (0.5 <= better.R / grid.R <= 2.0):
                    grid = better
                    state, pt = _solve_point(
                        replace(template, grid=grid), rho, opts,
                        _transfer(state.u, grid, rho))
            points[rho] = pt
            if state is not None and state.converged:
                prev = state
    return [points[r] for r in sorted(points)]


def _warm_lambda(u_prev, spec, rho):
    """Multiplier estimate of the warm start after mass and fiber projection."""
    try:
        v = project_mass(u_prev, rho)
        v, _ = project_fiber(v, spec)
        lam = lambda_multiplier(v, spec)
    except (ValueError, FiberProjectionError):
        return None
    return lam if lam > 0 else None


def check_monotone(points, rel_tol=1e-6):
    """Strict-decrease verdict over consecutive converged points.

    Returns "strict" when every consecutive pair drops by more than
    rel_tol * c, "violated" on any increase beyond tolerance, and
    "inconclusive" otherwise (including fewer than two converged points).
    """
    conv = sorted((p for p in points if p.converged), key=lambda p: p.rho)
    if len(conv) < 2:
        return "inconclusive"
    verdict = "strict"
    for a, b in zip(conv, conv[1:]):
        tol = rel_tol * abs(a.c)
        if b.c > a.c + tol:
            return "violated"
        if b.c >= a.c - tol:
            verdict = "inconclusive"
    return verdict


def asymptotics(points, mode):
    """Log-log slope of the converged points and a trend verdict.

    mode "rho_to_zero" checks the blow-up trend of c as the mass shrinks:
    divergence-consistent requires a negative slope whose implied ratio
    between the extreme points matches the measured one within 20%.
    mode "rho_to_infinity" reports decay-consistent when c decreases
    monotonically (the eta = 0 decay-to-zero regime).
    """
    if mode not in ("rho_to_zero", "rho_to_infinity"):
        raise ValueError("unknown asymptotics mode %r" % mode)
    conv = sorted((p for p in points if p.converged and p.c > 0),
                  key=lambda p: p.rho)
    if len(conv) < 4 or conv[-1].rho < 100.0 * conv[0].rho:
        raise InsufficientSpanError(
            "need >= 4 converged points spanning >= 2 decades in rho")
    lr = np.log([p.rho for p in conv])
    lc = np.log([p.c for p in conv])
    slope = float(np.polyfit(lr, lc, 1)[0])
    if mode == "rho_to_zero":
        ratio = conv[0].c / conv[-1].c
        fitted = (conv[0].rho / conv[-1].rho) ** slope
        ok = slope < 0 and abs(ratio / fitted - 1.0) <= 0.2
        verdict = "divergence-consistent" if ok else "inconsistent"
    else:
        decreasing = all(b.c < a.c for a, b in zip(conv, conv[1:]))
        verdict = "decay-consistent" if decreasing else "inconsistent"
    return {"slope": slope, "verdict": verdict, "points": len(conv),
            "span": conv[-1].rho / conv[0].rho}
