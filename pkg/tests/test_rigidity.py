import numpy as np
import pytest

from equil.grid import ChannelGrid, Field
from equil.poisson import solve
from equil.rigidity import (
    REGIME_CLAMPED_HIGH,
    REGIME_CLAMPED_LOW,
    REGIME_INTERIOR,
    critical_layer,
    energy_identity_stats,
    layer_lower_bound_margin,
    threshold_witness,
    threshold_witness_from_reports,
)


@pytest.fixture(scope="module")
def grid():
    return ChannelGrid(65, 65, 4.0)


def test_zero_velocity_steady_frame(grid):
    layer = critical_layer(Field.zeros(grid), 0.0)
    assert layer.monotone_ok
    assert np.allclose(layer.ystar, 0.0, atol=1e-12)
    assert set(layer.regime) == {REGIME_INTERIOR}


def test_clamping_rules(grid):
    z = Field.zeros(grid)
    low = critical_layer(z, 2.0)  # F_x = y + 2 > 0 everywhere
    assert np.all(low.ystar == -1.0)
    assert set(low.regime) == {REGIME_CLAMPED_LOW}
    high = critical_layer(z, -2.0)
    assert np.all(high.ystar == 1.0)
    assert set(high.regime) == {REGIME_CLAMPED_HIGH}


def test_interior_root_residual(grid):
    ux = Field.from_function(grid, lambda X, Y: 0.2 * np.sin(X) * np.cos(np.pi * Y / 2))
    layer = critical_layer(ux, 0.1)
    assert layer.monotone_ok
    F = grid.y[None, :] + 0.1 + ux.values
    for i in range(grid.nx):
        if layer.regime[i] == REGIME_INTERIOR:
            resid = np.interp(layer.ystar[i], grid.y, F[i])
            assert abs(resid) <= 1e-9


def test_monotone_flag_and_lower_bound(grid):
    ux = Field.from_function(grid, lambda X, Y: 0.2 * np.sin(X) * np.cos(np.pi * Y / 2))
    layer = critical_layer(ux, 0.0)
    assert layer.monotone_ok
    assert layer_lower_bound_margin(ux, 0.0, layer) >= -1e-12

    steep = Field.from_function(grid, lambda X, Y: 0.9 * np.sin(np.pi * Y))
    layer2 = critical_layer(steep, 0.0)
    assert not layer2.monotone_ok


def test_energy_identity_shear_flow(grid):
    # x-independent vorticity induces no vertical velocity
    w = Field.from_function(grid, lambda X, Y: np.exp(-((Y / 0.3) ** 2)) * (1 - Y**2))
    sol = solve(w)
    st = energy_identity_stats(w, sol, 0.0)
    assert st["lhs"] <= 1e-20
    assert abs(st["rhs_direct"]) <= 1e-12
    assert st["ratio"] is None


def test_energy_identity_manufactured():
    g = ChannelGrid(257, 129, 6.0)
    X, Y = g.meshgrid()
    psi = np.sin(np.pi * (Y + 1)) * np.exp(-(X**2))
    om = -(
        (4 * X**2 - 2) * np.exp(-(X**2)) * np.sin(np.pi * (Y + 1))
        - np.pi**2 * psi
    )
    sol = solve(Field(g, om))
    st = energy_identity_stats(Field(g, om), sol, 0.0)
    assert st["lhs"] > 0
    assert abs(st["lhs"] - st["rhs_direct"]) / st["lhs"] <= 0.02


def test_threshold_witness_recovers_synthetic_crossing():
    eps = [0.1, 0.05, 0.025, 0.0125]
    table = {s: [e ** (1.45 - s) for e in eps] for s in (0.8, 1.1, 1.45, 1.7, 2.0)}
    out = threshold_witness(table, eps)
    assert out["s0"] == pytest.approx(1.45, abs=1e-6)
    assert not out["low_confidence"]


def test_threshold_witness_flags_noisy_fit():
    rng = np.random.default_rng(0)
    eps = [0.1, 0.05, 0.025]
    table = {
        s: [e ** (1.5 - s) * np.exp(rng.normal(0, 0.5)) for e in eps]
        for s in (1.0, 1.5, 2.0)
    }
    out = threshold_witness(table, eps)
    assert out["low_confidence"]


def test_threshold_witness_requires_three_points():
    with pytest.raises(ValueError):
        threshold_witness({1.0: [1, 2]}, [0.1, 0.05])


def test_mass_norm_slope_is_two():
    # W^(0,1) of the synthetic family scales exactly like the mass
    eps = [0.1, 0.05, 0.025]
    from equil.studies import fit_loglog

    fit = fit_loglog(eps, [e**2 for e in eps], predicted=2.0, tol=0.2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.passed


def test_witness_from_reports_synthetic():
    # synthetic "reports" carrying fields with a known anisotropic scaling
    from dataclasses import dataclass

    g = ChannelGrid(129, 257, 4.0)
    X, Y = g.meshgrid()

    @dataclass
    class FakeSpec:
        eps: float

    @dataclass
    class FakeReport:
        omega: Field
        spec: FakeSpec

    reports = []
    for e in (0.1, 0.05, 0.025):
        prof = e * np.exp(-(X**2) - (Y / (4 * e)) ** 2) * (1 - Y**2)
        reports.append(FakeReport(Field(g, prof), FakeSpec(e)))
    out = threshold_witness_from_reports(reports, q=0.05, p=2.0,
                                         s_scan=[0.5, 1.0, 1.5, 2.0])
    # amplitude ~ eps, y-width ~ eps: W^(s,2) ~ eps^(1.5 - s), crossing near 1.5
    assert out["s0"] == pytest.approx(1.5, abs=0.35)
