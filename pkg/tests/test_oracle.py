"""Shooting oracle, Gagliardo-Nirenberg constants and scaling laws.

The frozen reference numbers below were produced by the shooting method
itself on the default grid and cross-checked against the variational
solver during development; they pin the oracle against regressions.
"""

import math
import os

import numpy as np
import pytest

from nls_norm import RadialGrid, gn_constant, power_scaling, shoot, powers
from nls_norm.oracle import cache_path, sobolev_constant
from nls_norm.radial import integrate, kinetic, mass

CRIT3 = 2.0 + 4.0 / 3.0

# (N, p) -> (gn constant, u(0), base mass, base energy) on R = 30, n = 4000
FROZEN = {
    (3, 4.0): (0.44925711842459859, 4.337387679983884,
               18.897251302216393, 9.4486083342448346),
    (3, 3.6): (0.47897051726245077, 4.2247156810630226,
               38.3237252871415, 6.38724870540889),
}


def test_frozen_constants():
    for (N, p), (c, u0, bm, be) in FROZEN.items():
        assert gn_constant(N, p) == pytest.approx(c, abs=1e-6)
        law = power_scaling(p, N)
        assert law.base_mass == pytest.approx(bm, rel=1e-6)
        assert law.base_energy == pytest.approx(be, rel=1e-6)


def test_scaling_law_exponents_closed_form():
    law4 = power_scaling(4.0, 3)
    assert law4.alpha == pytest.approx(0.5)
    assert law4.beta == pytest.approx(-0.5)
    law36 = power_scaling(3.6, 3)
    assert law36.alpha == pytest.approx(0.75)
    assert law36.beta == pytest.approx(-0.25)
    # the law is exact at the base point
    assert law4.c_of_rho(law4.base_mass) == pytest.approx(law4.base_energy)
    assert law4.lam_of_rho(law4.base_mass) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        power_scaling(CRIT3, 3)
    with pytest.raises(ValueError):
        power_scaling(6.0, 3)


def test_shoot_profile_quality():
    res = shoot(powers([(1.0, 4.0)]), 3, 1.0, RadialGrid(3, 30.0, 4000))
    assert res.crossings == 0
    assert res.decay_ok
    assert res.ode_residual < 1e-8
    assert res.u0 == pytest.approx(FROZEN[(3, 4.0)][1], rel=1e-8)
    assert np.all(res.profile.values[:-1] > 0.0)
    with pytest.raises(ValueError):
        shoot(powers([(1.0, 4.0)]), 3, -1.0)


def test_shoot_dilation_symmetry():
    # u_lam(x) = lam^{1/(p-2)} w(sqrt(lam) x) for the pure power p = 4
    grid1 = RadialGrid(3, 30.0, 4000)
    grid4 = RadialGrid(3, 15.0, 2000)
    w = shoot(powers([(1.0, 4.0)]), 3, 1.0, grid1)
    u4 = shoot(powers([(1.0, 4.0)]), 3, 4.0, grid4)
    # grid4 nodes sit at half the grid1 spacing: w(2 r_i) = w(r_{2i})
    pred = 2.0 * w.profile.values[::2]
    np.testing.assert_allclose(u4.profile.values, pred, rtol=2e-4, atol=2e-4)


def test_gn_constant_validates_range():
    with pytest.raises(ValueError):
        gn_constant(3, 2.0)
    with pytest.raises(ValueError):
        gn_constant(3, 6.0)


def test_sobolev_constant_closed_form():
    # N = 3: best constant of |u|_6 <= C |grad u|_2
    c = sobolev_constant(3)
    expected = (3.0 * math.pi * (math.gamma(1.5) / math.gamma(3.0))
                ** (2.0 / 3.0)) ** -0.5
    assert c == pytest.approx(expected, rel=1e-13)


def test_cache_roundtrip(tmp_path, monkeypatch):
    target = tmp_path / "cache.txt"
    monkeypatch.setenv("NLS_NORM_CACHE", str(target))
    assert cache_path() == str(target)
    c1 = gn_constant(3, 4.0, R=12.0, n=600)
    assert target.exists()
    lines = target.read_text().strip().splitlines()
    assert len(lines) == 1
    # second call is served from the cache and appends nothing
    c2 = gn_constant(3, 4.0, R=12.0, n=600)
    assert c2 == c1
    assert len(target.read_text().strip().splitlines()) == 1
