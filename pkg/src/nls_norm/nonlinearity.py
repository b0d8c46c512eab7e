"""Nonlinear term g and its derived quantities G, H, h.

The nonlinearity is described through g' as a piecewise polynomial in |s|,
so that g, G(s) = int_0^s g and H = g(s)s - 2G(s) all have closed forms per
piece.  On top of the evaluation routines this module decides admissibility:
the standing assumptions (A0)-(A6) on growth and sign of G and H, the
small-argument density eta = limsup_{s->0} G(s)/|s|^{2_*}, and the largest
admissible mass rho* = (2^* eta C^{2_*})^{-N/2}.

Notation: 2_* = 2 + 4/N is the mass-critical exponent, 2^* = 2N/(N-2) the
Sobolev-critical one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PowerTerm",
    "NonlinearitySpec",
    "AssumptionReport",
    "Verdict",
    "powers",
    "from_gprime_pieces",
    "build_example",
    "eval",
    "estimate_eta",
    "rho_threshold",
    "preceq",
    "check_assumptions",
    "mass_critical_exponent",
    "sobolev_critical_exponent",
]

#: s-range scanned when a verdict cannot be decided from exponents alone
SCAN_LO = 1e-8
SCAN_HI = 1e8
SCAN_POINTS = 4001


def mass_critical_exponent(N):
    """2_* = 2 + 4/N, the L^2-critical power."""
    return 2.0 + 4.0 / N


def sobolev_critical_exponent(N):
    """2^* = 2N/(N-2), the Sobolev-critical power (N >= 3)."""
    if N <= 2:
        raise ValueError("dimension must satisfy N >= 3")
    return 2.0 * N / (N - 2.0)


@dataclass(frozen=True)
class PowerTerm:
    """One term c|s|^{p-2}s of a sum-of-powers nonlinearity.

    Parameters
    ----------
    coefficient : float
        The prefactor c; must be finite.
    exponent : float
        The p in c|s|^{p-2}s; must satisfy p > 2 so g(0) = 0 and
        g'(0) exists as a limit.
    """

    coefficient: float
    exponent: float

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        if not (self.exponent > 2.0):
            raise ValueError("exponent must exceed 2")


def _poly_eval(terms, x):
    """Evaluate sum of c*x**e over (c, e) pairs; x is a scalar or array >= 0."""
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    # overflow to inf is fine: callers reject non-finite trial states
    with np.errstate(over="ignore"):
        for c, e in terms:
            if c == 0.0:
                continue
            if e == 0.0:
                acc = acc + c
            else:
                acc = acc + c * x**e
    return acc


def _antiderivative(terms):
    """Term-wise antiderivative of sum c*x**e; requires every e > -1."""
    out = []
    for c, e in terms:
        if e <= -1.0:
            raise ValueError("non-integrable exponent %r in g' piece" % e)
        out.append((c / (e + 1.0), e + 1.0))
    return tuple(out)


def _combine(terms):
    """Merge terms sharing an exponent and drop exact zeros."""
    agg = {}
    for c, e in terms:
        agg[e] = agg.get(e, 0.0) + c
    return tuple(sorted((c, e) for e, c in agg.items() if c != 0.0))


class NonlinearitySpec:
    """Piecewise description of an odd nonlinearity g through g'.

    Pieces live on intervals of a = |s| with left knots ``knots`` (the first
    knot is 0, the last piece extends to infinity); on each piece g'(s) is a
    polynomial sum c*a**e.  g, G and H are integrated in closed form with
    continuity constants chosen so g is continuous and g(0) = G(0) = 0.

    Parameters
    ----------
    knots : sequence of float
        Strictly increasing left endpoints, knots[0] == 0.
    gprime_terms : sequence of sequences of (coef, exp)
        One term list per piece, exponents > -1.
    kind : str
        Construction tag ("powers", "piecewise", "E1", ...).
    terms : tuple of PowerTerm, optional
        Present when the spec is an exact sum of powers; enables
        closed-form limits and fast fiber-map moments.
    descriptor : dict, optional
        JSON-compatible description used for digests and round trips.
    """

    def __init__(self, knots, gprime_terms, kind="piecewise", terms=None, descriptor=None):
        knots = tuple(float(t) for t in knots)
        if len(knots) == 0 or knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if len(gprime_terms) != len(knots):
            raise ValueError("need one g' term list per piece")
        dg = []
        for piece in gprime_terms:
            piece = tuple((float(c), float(e)) for c, e in piece)
            for c, e in piece:
                if not (math.isfinite(c) and math.isfinite(e)):
                    raise ValueError("non-finite g' term")
                if e <= -1.0:
                    raise ValueError("g' exponent must exceed -1")
            dg.append(piece)
        if any(e <= -1.0 or (e + 1.0) <= 0.0 for c, e in dg[0]):
            raise ValueError("innermost g' piece must integrate to g(0) = 0")

        self.knots = knots
        self.parity = "odd"
        self.kind = kind
        self.terms = tuple(terms) if terms is not None else None
        self.descriptor = descriptor if descriptor is not None else {
            "kind": kind,
            "knots": list(knots),
            "gprime": [[[c, e] for c, e in piece] for piece in dg],
        }

        g_tab, big_g_tab = [], []
        for k, piece in enumerate(dg):
            p_terms = _antiderivative(piece)
            if k == 0:
                const = 0.0
            else:
                t = knots[k]
                const = _poly_eval(g_tab[k - 1], t) - _poly_eval(p_terms, t)
            g_terms = _combine(p_terms + ((float(const), 0.0),))
            q_terms = _antiderivative(g_terms)
            if k == 0:
                big_const = 0.0
            else:
                t = knots[k]
                big_const = _poly_eval(big_g_tab[k - 1], t) - _poly_eval(q_terms, t)
            g_tab.append(g_terms)
            big_g_tab.append(_combine(q_terms + ((float(big_const), 0.0),)))

        h_tab = [
            _combine(tuple((c, e + 1.0) for c, e in dgk) + tuple((-c, e) for c, e in gk))
            for dgk, gk in zip(dg, g_tab)
        ]
        big_h_tab = [
            _combine(tuple((c, e + 1.0) for c, e in gk) + tuple((-2.0 * c, e) for c, e in Gk))
            for gk, Gk in zip(g_tab, big_g_tab)
        ]
        self._tables = {
            "dg": tuple(_combine(p) for p in dg),
            "g": tuple(g_tab),
            "G": tuple(big_g_tab),
            "h": tuple(h_tab),
            "H": tuple(big_h_tab),
        }
        self._knots_arr = np.asarray(knots)

    # -- evaluation -----------------------------------------------------

    def _eval_abs(self, which, a):
        """Evaluate the |s|-profile of the requested function on a >= 0."""
        table = self._tables[which]
        a = np.asarray(a, dtype=float)
        idx = np.searchsorted(self._knots_arr, a, side="right") - 1
        idx = np.clip(idx, 0, len(table) - 1)
        out = np.zeros_like(a)
        for k, terms in enumerate(table):
            m = idx == k
            if m.any():
                out[m] = _poly_eval(terms, a[m])
        return out

    def eval(self, which, s):
        """Evaluate g, G, H, h or g' (``which`` = "dg") at s.

        g and h are odd, G and H (and g') are even; values for negative s
        follow from the |s|-profile by parity.
        """
        if which not in self._tables:
            raise ValueError("unknown function %r" % which)
        arr = np.asarray(s, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        v = self._eval_abs(which, np.abs(arr))
        if which in ("g", "h"):
            v = v * np.sign(arr)
        return float(v[0]) if scalar else v

    def g(self, s):
        return self.eval("g", s)

    def G(self, s):
        return self.eval("G", s)

    def H(self, s):
        return self.eval("H", s)

    def h(self, s):
        return self.eval("h", s)

    def gprime(self, s):
        return self.eval("dg", s)

    # -- structure helpers ----------------------------------------------

    @property
    def is_sum_of_powers(self):
        return self.terms is not None

    def dominant_term(self, which, end):
        """Dominant (coef, exp) of the named function as |s| -> 0 or infinity.

        ``end`` is "zero" (innermost piece, smallest exponent) or "inf"
        (outermost piece, largest exponent).
        """
        table = self._tables[which]
        terms = table[0] if end == "zero" else table[-1]
        if not terms:
            return 0.0, 0.0
        if end == "zero":
            c, e = min(terms, key=lambda t: t[1])
        else:
            c, e = max(terms, key=lambda t: t[1])
        return c, e


def powers(term_list):
    """Sum-of-powers spec g(s) = sum c_k |s|^{p_k - 2} s.

    ``term_list`` holds PowerTerm objects or (coefficient, p) pairs.
    """
    terms = tuple(
        t if isinstance(t, PowerTerm) else PowerTerm(float(t[0]), float(t[1]))
        for t in term_list
    )
    if not terms:
        raise ValueError("need at least one power term")
    dg = tuple((t.coefficient * (t.exponent - 1.0), t.exponent - 2.0) for t in terms)
    descriptor = {
        "kind": "powers",
        "terms": [[t.coefficient, t.exponent] for t in terms],
    }
    return NonlinearitySpec((0.0,), (dg,), kind="powers", terms=terms, descriptor=descriptor)


def from_gprime_pieces(knots, gprime_terms, kind="piecewise", descriptor=None):
    """Build a spec directly from g' pieces; see NonlinearitySpec."""
    return NonlinearitySpec(knots, gprime_terms, kind=kind, descriptor=descriptor)


def eval(spec, which, s):  # noqa: A001 - operation name fixed by the API
    """Functional form of NonlinearitySpec.eval."""
    return spec.eval(which, s)


# -- eta and the mass threshold ------------------------------------------


def _eta_details(spec, N):
    """(eta, estimated_flag).  eta may be +-inf when the limsup diverges."""
    crit = mass_critical_exponent(N)
    if spec.is_sum_of_powers:
        # G = sum (c/p)|s|^p: the p < 2_* terms dominate, p = 2_* contributes
        # its coefficient, p > 2_* vanishes in the limit.
        below = [t for t in spec.terms if t.exponent < crit - 1e-12]
        if below:
            c, p = min(((t.coefficient, t.exponent) for t in below), key=lambda t: t[1])
            return (math.inf if c > 0 else -math.inf), False
        eta = sum(
            t.coefficient / t.exponent
            for t in spec.terms
            if abs(t.exponent - crit) <= 1e-12
        )
        return float(eta), False
    # the innermost closed-form piece of G decides the limit exactly
    c0, e0 = spec.dominant_term("G", "zero")
    if e0 > crit + 1e-12:
        return 0.0, False
    if abs(e0 - crit) <= 1e-12:
        return float(c0), False
    if c0 != 0.0:
        return (math.inf if c0 > 0 else -math.inf), False
    # degenerate innermost piece: fall back to a dyadic-shell scan
    sups = []
    for k in range(20, 61):
        s = np.geomspace(2.0 ** (-k - 1), 2.0 ** (-k), 9)
        sups.append(float(np.max(spec.eval("G", s) / s**crit)))
    deep = sups[20:]  # shells k = 40..60
    eta = max(deep)
    if deep[-1] > 4.0 * max(deep[0], 1e-300) and deep[-1] > deep[len(deep) // 2]:
        return math.inf, True
    return eta, True


def estimate_eta(spec, N):
    """Estimate eta = limsup_{s->0} G(s)/|s|^{2_*}.

    Exact for sum-of-powers specs; otherwise the supremum over dyadic
    shells [2^{-k-1}, 2^{-k}], k = 20..60.  Returns +inf when the shell
    suprema diverge (the admissibility assumption fails).
    """
    eta, _ = _eta_details(spec, N)
    return eta


def rho_threshold(eta, N, C_gn):
    """Largest mass rho* with 2^* eta C^{2_*} rho^{2/N} < 1; +inf when eta = 0."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if C_gn <= 0:
        raise ValueError("C_gn must be positive")
    if eta == 0.0:
        return math.inf
    crit = mass_critical_exponent(N)
    sob = sobolev_critical_exponent(N)
    return float((sob * eta * C_gn**crit) ** (-N / 2.0))


# -- pointwise inequalities ----------------------------------------------

#: pair identifiers for preceq
PAIR_A4 = "A4"  # 2_* H <= h(s) s
PAIR_A5_LOWER = "A5-lower"  # (4/N) G <= H
PAIR_A5_UPPER = "A5-upper"  # H <= (2^*-2) G


def _pair_functions(spec, which_pair, N):
    crit = mass_critical_exponent(N)
    sob = sobolev_critical_exponent(N)
    if which_pair == PAIR_A5_LOWER:
        return (lambda s: (4.0 / N) * spec.eval("G", s), lambda s: spec.eval("H", s))
    if which_pair == PAIR_A5_UPPER:
        return (lambda s: spec.eval("H", s), lambda s: (sob - 2.0) * spec.eval("G", s))
    if which_pair == PAIR_A4:
        return (lambda s: crit * spec.eval("H", s), lambda s: spec.eval("h", s) * s)
    raise ValueError("unknown pair %r" % which_pair)


def preceq(spec, which_pair, N, depth=40):
    """Decide f1 <= f2 with strictness in every neighbourhood of zero.

    Returns "violated" if f1 > f2 is found on the scan, "strict" if f1 <= f2
    everywhere and every dyadic shell [2^{-k-1}, 2^{-k}], k = 1..depth,
    contains a point of strict inequality, "weak-only" otherwise.  The
    relation is even in s for odd g, so positive s suffices.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    f1, f2 = _pair_functions(spec, which_pair, N)
    s = np.geomspace(SCAN_LO, SCAN_HI, SCAN_POINTS)
    a, b = f1(s), f2(s)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    if np.any((a - b) / scale > 1e-12):
        return "violated"
    strict = True
    for k in range(1, depth + 1):
        sk = np.geomspace(2.0 ** (-k - 1), 2.0 ** (-k), 17)
        ak, bk = f1(sk), f2(sk)
        sck = np.maximum(np.maximum(np.abs(ak), np.abs(bk)), 1e-300)
        if np.any((ak - bk) / sck > 1e-12):
            return "violated"
        if not np.any(ak < bk - 1e-14 * np.abs(bk)):
            strict = False
    return "strict" if strict else "weak-only"


# -- assumption report ----------------------------------------------------


@dataclass
class Verdict:
    """Outcome of one assumption check: pass/fail/undetermined plus witness."""

    status: str
    witness: float | None = None
    detail: str = ""

    def to_dict(self):
        return {"status": self.status, "witness": self.witness, "detail": self.detail}


@dataclass
class AssumptionReport:
    """Admissibility report for a (spec, N, rho) instance.

    ``verdicts`` maps A0..A6 plus the strict variants A4preceq/A5preceq to
    Verdict records; ``branch`` names the applicable existence statement:
    theorem-b (odd nonlinearity, strict inequalities), theorem-a
    (g'(0) = o(1)), main-only (existence on the ball without the sphere
    identification) or inadmissible.
    """

    verdicts: dict
    eta: float
    eta_estimated: bool
    growth_constant: float
    zeta0: float | None
    rho: float
    rho_star: float
    rho_admissible: bool
    branch: str

    REQUIRED = ("A0", "A1", "A2", "A3", "A4", "A5", "A6")

    def required_pass(self):
        return all(self.verdicts[k].status == "pass" for k in self.REQUIRED)

    def to_dict(self):
        return {
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "eta": self.eta,
            "eta_estimated": self.eta_estimated,
            "growth_constant": self.growth_constant,
            "zeta0": self.zeta0,
            "rho": self.rho,
            "rho_star": self.rho_star,
            "rho_admissible": self.rho_admissible,
            "branch": self.branch,
        }


def _scan_inequality(spec, which_pair, N):
    """Scan verdict for a plain <= inequality: (status, witness, worst)."""
    f1, f2 = _pair_functions(spec, which_pair, N)
    s = np.geomspace(SCAN_LO, SCAN_HI, SCAN_POINTS)
    a, b = f1(s), f2(s)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    d = (a - b) / scale
    i = int(np.argmax(d))
    worst = float(d[i])
    if worst > 1e-9:
        return "fail", float(s[i]), worst
    if worst > 1e-12:
        return "undetermined", float(s[i]), worst
    return "pass", None, worst


def _knot_continuity(spec, which):
    """Largest relative jump of the named function across interior knots."""
    worst = 0.0
    where = None
    table = spec._tables[which]
    for k in range(1, len(spec.knots)):
        t = spec.knots[k]
        left = float(_poly_eval(table[k - 1], t))
        right = float(_poly_eval(table[k], t))
        jump = abs(left - right) / max(abs(left), abs(right), 1.0)
        if jump > worst:
            worst, where = jump, t
    return worst, where


def check_assumptions(spec, N, rho):
    """Check (A0)-(A6), estimate eta, compute rho* and pick the branch.

    Limit statements (A1)-(A3) are decided from exact piece exponents;
    the pointwise inequalities (A4)-(A6) and the growth bound in (A0) use
    a dense log-scale scan of |s| in [1e-8, 1e8], so ties within tolerance
    come back as "undetermined" rather than a hard verdict.
    """
    if N < 3:
        raise ValueError("N must be >= 3")
    if rho <= 0:
        raise ValueError("rho must be positive")
    crit = mass_critical_exponent(N)
    sob = sobolev_critical_exponent(N)
    verdicts = {}
    s_scan = np.geomspace(SCAN_LO, SCAN_HI, SCAN_POINTS)

    # A0: h continuous (g is continuous by construction) and
    # |h| <= c(|s| + |s|^{2^*-1}) with finite c.
    jump_g, at_g = _knot_continuity(spec, "g")
    jump_h, at_h = _knot_continuity(spec, "h")
    h_vals = spec.eval("h", s_scan)
    growth_constant = float(np.max(np.abs(h_vals) / (s_scan + s_scan ** (sob - 1.0))))
    _, h_top = spec.dominant_term("h", "inf")
    if jump_g > 1e-9 or jump_h > 1e-9:
        verdicts["A0"] = Verdict("fail", at_h if jump_h > jump_g else at_g,
                                 "g or h discontinuous at a knot")
    elif h_top > sob - 1.0 + 1e-12:
        verdicts["A0"] = Verdict("fail", SCAN_HI,
                                 "h grows faster than |s|^{2^*-1}")
    else:
        verdicts["A0"] = Verdict("pass", None, "growth constant %.6g" % growth_constant)

    # A1: eta finite.
    eta, eta_estimated = _eta_details(spec, N)
    if math.isinf(eta) and eta > 0:
        verdicts["A1"] = Verdict("fail", None, "G/|s|^{2_*} diverges as s -> 0")
    else:
        verdicts["A1"] = Verdict("pass", None, "eta = %r" % eta)

    # A2: G/|s|^{2_*} -> infinity at infinity; decided by the outer exponent.
    c2, e2 = spec.dominant_term("G", "inf")
    if e2 > crit + 1e-12 and c2 > 0:
        verdicts["A2"] = Verdict("pass", None, "outer G exponent %.6g" % e2)
    else:
        verdicts["A2"] = Verdict("fail", None,
                                 "outer G term %.6g*|s|^%.6g does not dominate |s|^{2_*}" % (c2, e2))

    # A3: G/|s|^{2^*} -> 0 at infinity.
    if e2 < sob - 1e-12:
        verdicts["A3"] = Verdict("pass", None, "outer G exponent %.6g" % e2)
    else:
        verdicts["A3"] = Verdict("fail", None, "outer G exponent %.6g >= 2^*" % e2)

    # A4, A5: scanned pointwise inequalities.
    st4, w4, _ = _scan_inequality(spec, PAIR_A4, N)
    verdicts["A4"] = Verdict(st4, w4, "2_* H <= h(s)s")
    st5a, w5a, _ = _scan_inequality(spec, PAIR_A5_LOWER, N)
    st5b, w5b, _ = _scan_inequality(spec, PAIR_A5_UPPER, N)
    if "fail" in (st5a, st5b):
        verdicts["A5"] = Verdict("fail", w5a if st5a == "fail" else w5b,
                                 "lower" if st5a == "fail" else "upper")
    elif "undetermined" in (st5a, st5b):
        verdicts["A5"] = Verdict("undetermined", w5a or w5b, "")
    else:
        verdicts["A5"] = Verdict("pass", None, "")

    # A6: H positive somewhere; witness the first robustly positive point.
    h_big = spec.eval("H", s_scan)
    zeta0 = None
    pos = np.nonzero(h_big > 0)[0]
    for i in pos:
        stop = min(i + 4, len(s_scan))
        if np.all(h_big[i:stop] > 0):
            zeta0 = float(s_scan[i])
            break
    if zeta0 is not None:
        verdicts["A6"] = Verdict("pass", zeta0, "H(zeta0) = %.6g" % spec.eval("H", zeta0))
    else:
        verdicts["A6"] = Verdict("fail", None, "H <= 0 on the scanned range")

    # strict variants
    p4 = preceq(spec, PAIR_A4, N)
    verdicts["A4preceq"] = Verdict("pass" if p4 == "strict" else "fail", None, p4)
    p5a = preceq(spec, PAIR_A5_LOWER, N)
    p5b = preceq(spec, PAIR_A5_UPPER, N)
    a5_strict = p5a == "strict" and p5b == "strict"
    verdicts["A5preceq"] = Verdict("pass" if a5_strict else "fail", None,
                                   "lower=%s upper=%s" % (p5a, p5b))

    # mass threshold
    if math.isinf(eta) and eta > 0:
        rho_star = 0.0
    elif eta <= 0.0:
        rho_star = math.inf
    else:
        from .oracle import gn_constant

        rho_star = rho_threshold(eta, N, gn_constant(N, crit))
    rho_admissible = rho < rho_star

    report = AssumptionReport(
        verdicts=verdicts,
        eta=eta,
        eta_estimated=eta_estimated,
        growth_constant=growth_constant,
        zeta0=zeta0,
        rho=rho,
        rho_star=rho_star,
        rho_admissible=rho_admissible,
        branch="inadmissible",
    )
    if report.required_pass() and rho_admissible:
        _, dg0 = spec.dominant_term("dg", "zero")
        gprime_vanishes = dg0 > 1e-12
        odd = spec.parity == "odd"
        if odd and (a5_strict or (N in (3, 4) and p5a == "strict" and st5b == "pass")):
            report.branch = "theorem-b"
        elif a5_strict and gprime_vanishes:
            report.branch = "theorem-a"
        else:
            report.branch = "main-only"
    return report


# -- example builders ------------------------------------------------------


def _pieces_of(spec):
    """(knots, dg term lists) of a spec, for piece surgery."""
    return list(spec.knots), [list(p) for p in spec._tables["dg"]]


def _restrict_above(knots, pieces, cut):
    """Pieces of g' on (cut, infinity): the piece containing cut plus later ones."""
    out_knots, out_pieces = [], []
    for k, t in enumerate(knots):
        hi = knots[k + 1] if k + 1 < len(knots) else math.inf
        if hi <= cut:
            continue
        out_knots.append(max(t, cut))
        out_pieces.append(pieces[k])
    return out_knots, out_pieces


def build_example(kind, base=None, N=3, **params):
    """Construct the catalogue nonlinearities E1-E4.

    E1 replaces g' inside |s| <= 1 by the Sobolev-critical profile
    g'(1)|s|^{2^*-2}; E2 builds g' = a(|s|)|s|^{2_*-2} from level plateaus
    with a power continuation beyond M; E3 splices a mass-critical band
    [1, b] into g'; E4 adds mu|s|^{2_*} to G.  Preconditions (odd base,
    positive g' at the knots, ordered positive levels, mu >= 0) are
    enforced.
    """
    crit = mass_critical_exponent(N)
    sob = sobolev_critical_exponent(N)

    if kind == "E1":
        if base is None or base.parity != "odd":
            raise ValueError("E1 needs an odd base nonlinearity")
        gp1 = base.gprime(1.0)
        if gp1 <= 0:
            raise ValueError("E1 needs g'(1) > 0")
        knots, pieces = _pieces_of(base)
        up_k, up_p = _restrict_above(knots, pieces, 1.0)
        new_knots = [0.0] + up_k
        new_pieces = [[(gp1, sob - 2.0)]] + up_p
        return NonlinearitySpec(
            new_knots, new_pieces, kind="E1",
            descriptor={"kind": "E1", "N": N, "base": base.descriptor},
        )

    if kind == "E2":
        intervals = [(float(a), float(b)) for a, b in params["intervals"]]
        levels = [float(a) for a in params["levels"]]
        big_m = float(params["M"])
        p = float(params["p"])
        a_limit = float(params.get("a_limit", levels[0]))
        if len(intervals) != len(levels) or not intervals:
            raise ValueError("E2 needs aligned intervals and levels")
        if not (crit < p < sob):
            raise ValueError("E2 outer exponent must lie in (2_*, 2^*)")
        flat = [x for ab in intervals for x in ab]
        if any(b <= a for a, b in zip(flat, flat[1:])):
            raise ValueError("E2 intervals must be disjoint and increasing in |s|")
        if flat[0] <= 0 or flat[-1] >= big_m:
            raise ValueError("E2 intervals must sit inside (0, M)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("E2 levels must decrease towards 0 (increase in |s|)")
        if any(a <= 0 for a in levels) or not (0.0 <= a_limit <= levels[0]):
            raise ValueError("E2 levels must be positive with a_limit <= innermost level")
        q = crit - 2.0
        # a(s) piecewise linear: a_limit at 0, plateaus a_j on the intervals
        nodes = [(0.0, a_limit)]
        for (lo, hi), a in zip(intervals, levels):
            nodes.append((lo, a))
            nodes.append((hi, a))
        nodes.append((big_m, levels[-1]))
        knots, pieces = [], []
        for (s0, a0), (s1, a1) in zip(nodes, nodes[1:]):
            if s1 <= s0:
                continue
            slope = (a1 - a0) / (s1 - s0)
            knots.append(s0)
            pieces.append([(a0 - slope * s0, q), (slope, q + 1.0)])
        c_outer = levels[-1] * big_m ** (crit - p)
        knots.append(big_m)
        pieces.append([(c_outer, p - 2.0)])
        return NonlinearitySpec(
            knots, pieces, kind="E2",
            descriptor={"kind": "E2", "N": N, "intervals": intervals,
                        "levels": levels, "M": big_m, "p": p,
                        "a_limit": a_limit, "C": c_outer},
        )

    if kind == "E3":
        b = float(params["b"])
        if base is None or base.parity != "odd":
            raise ValueError("E3 needs an odd base nonlinearity")
        if b <= 1.0:
            raise ValueError("E3 needs b > 1")
        gp1 = base.gprime(1.0)
        gpb = base.gprime(b)
        if gp1 <= 0 or gpb <= 0:
            raise ValueError("E3 needs g' > 0 at both knots")
        scale = b ** (crit - 2.0) * gp1 / gpb
        knots, pieces = _pieces_of(base)
        lo_k, lo_p = [], []
        for k, t in enumerate(knots):
            if t < 1.0:
                lo_k.append(t)
                lo_p.append(pieces[k])
        up_k, up_p = _restrict_above(knots, pieces, b)
        new_knots = lo_k + [1.0] + up_k
        new_pieces = lo_p + [[(gp1, crit - 2.0)]] + [
            [(scale * c, e) for c, e in piece] for piece in up_p
        ]
        return NonlinearitySpec(
            new_knots, new_pieces, kind="E3",
            descriptor={"kind": "E3", "N": N, "b": b, "base": base.descriptor},
        )

    if kind == "E4":
        mu = float(params["mu"])
        if base is None:
            raise ValueError("E4 needs a base nonlinearity")
        if mu < 0:
            raise ValueError("E4 needs mu >= 0")
        if mu == 0.0:
            return base
        if base.is_sum_of_powers:
            terms = base.terms + (PowerTerm(crit * mu, crit),)
            dg = tuple((t.coefficient * (t.exponent - 1.0), t.exponent - 2.0) for t in terms)
            return NonlinearitySpec(
                (0.0,), (dg,), kind="E4", terms=terms,
                descriptor={"kind": "E4", "N": N, "mu": mu, "base": base.descriptor},
            )
        knots, pieces = _pieces_of(base)
        extra = (mu * crit * (crit - 1.0), crit - 2.0)
        new_pieces = [piece + [extra] for piece in pieces]
        return NonlinearitySpec(
            knots, new_pieces, kind="E4",
            descriptor={"kind": "E4", "N": N, "mu": mu, "base": base.descriptor},
        )

    raise ValueError("unknown example kind %r" % kind)
