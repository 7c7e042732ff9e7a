import numpy as np
import pytest
from scipy.integrate import dblquad

from equil.grid import ChannelGrid, Field, integrate
from equil.greenkernel import (
    REGIME_FAR,
    REGIME_GENERIC,
    REGIME_NEAR,
    cell_mean_log_r,
    convolve,
    green,
)
from equil.penalty import PenaltyFamily
from equil.variational import AdmissibleSpec, steiner, trial_ellipse


def test_boundary_vanishing():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, xp = rng.uniform(-5, 5, 2)
        yp = rng.uniform(-0.9, 0.9)
        assert abs(green((x, 1.0), (xp, yp)).value) < 1e-15
        assert abs(green((x, -1.0), (xp, yp)).value) < 1e-15


def test_symmetry_random_pairs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        z = (rng.uniform(-8, 8), rng.uniform(-1, 1))
        zp = (rng.uniform(-8, 8), rng.uniform(-1, 1))
        if z == zp:
            continue
        assert green(z, zp).value == pytest.approx(green(zp, z).value, rel=1e-12, abs=1e-18)


def test_coincident_points_rejected():
    with pytest.raises(ValueError):
        green((0.3, 0.2), (0.3, 0.2))


def test_near_diagonal_log_asymptote():
    r = 1e-4
    for z in [(0.0, 0.0), (1.3, 0.4), (-2.0, -0.6)]:
        ke = green(z, (z[0] + r, z[1]))
        assert ke.regime == REGIME_NEAR
        lead = -np.log(r) / (2 * np.pi)
        assert ke.value == pytest.approx(lead, rel=0.05)


def test_far_field_exponential_bound():
    dx = 10.0
    for y in (-0.5, 0.0, 0.5):
        for yp in (-0.5, 0.2, 0.5):
            val = green((0.0, y), (dx, yp)).value
            assert abs(val) <= 10.0 * np.exp(-np.pi / 2 * dx)


def test_far_switch_continuity():
    # the asymptotic branch takes over beyond |dx| = 30 with no visible jump
    a = green((0.0, 0.2), (29.999, 0.3))
    b = green((0.0, 0.2), (30.001, 0.3))
    assert a.regime == REGIME_GENERIC
    assert b.regime == REGIME_FAR
    assert a.value == pytest.approx(b.value, rel=1e-3)


def test_positivity_interior():
    rng = np.random.default_rng(2)
    for _ in range(50):
        z = (rng.uniform(-6, 6), rng.uniform(-0.99, 0.99))
        zp = (rng.uniform(-6, 6), rng.uniform(-0.99, 0.99))
        if np.hypot(z[0] - zp[0], z[1] - zp[1]) < 1e-12:
            continue
        assert green(z, zp).value > 0.0


def test_cell_mean_log_r_against_quadrature():
    hx, hy = 0.25, 0.0625
    ref, _ = dblquad(
        lambda y, x: np.log(np.hypot(x, y)),
        0, hx / 2, 0, hy / 2, epsabs=1e-12,
    )
    ref /= (hx / 2) * (hy / 2)
    assert cell_mean_log_r(hx, hy) == pytest.approx(ref, rel=1e-9)


def test_convolve_zero():
    g = ChannelGrid(33, 17, 4.0)
    psi = convolve(Field.zeros(g))
    assert np.all(psi.values == 0.0)


def test_convolve_positive_for_nonnegative_sources():
    g = ChannelGrid(65, 33, 4.0)
    X, Y = g.meshgrid()
    w = np.exp(-(X**2 + (Y / 0.3) ** 2)) * (np.abs(Y) < 0.8)
    psi = convolve(Field(g, w)).values
    interior = psi[1:-1, 1:-1]
    assert np.all(interior > 0.0)


def test_psi_decay_for_steiner_symmetric_source():
    g = ChannelGrid(257, 33, 16.0)
    X, Y = g.meshgrid()
    w = np.exp(-(X**2) - (Y / 0.2) ** 2) * (np.abs(Y) < 0.7)
    w = steiner(Field(g, w)).values
    f = Field(g, w)
    mass = integrate(f)
    psi = convolve(f)
    j0 = g.ny // 2
    for i in np.nonzero(np.abs(g.x) >= 2.0)[0]:
        assert abs(psi.values[i, j0]) <= 5.0 * mass / abs(g.x[i])


def test_small_data_potential_bound():
    # sources with mass <= eps^2 and amplitude <= eps^(1-q) produce potentials
    # of size at most 20 eps^2 |log eps|
    q = 0.25
    for eps in (0.1, 0.05, 0.025):
        fam = PenaltyFamily(eps, q)
        spec = AdmissibleSpec(eps, q)
        ny = int(np.ceil(8 / eps)) | 1
        g = ChannelGrid(129, max(65, ny), 8.0)
        w = trial_ellipse(g, spec, fam)
        psi = convolve(w)
        bound = 20.0 * eps**2 * fam.L
        assert np.max(np.abs(psi.values)) <= bound
