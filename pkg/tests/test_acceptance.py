"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Parameters are the stated desk scale: eps in {0.1, 0.05, 0.025}, q = 0.05,
513-wide grids with the y-resolution floor hy <= eps/6, traveling speed 0.5.
Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.

Several criteria depend on the penalized maximization having a localized,
positive-energy, positive-multiplier solution at these eps.  At desk scale the
constrained maximizer is instead an x-uniform band with a negative multiplier
(the positivity mechanism is asymptotic; see the project notes).  Those
criteria are implemented exactly as stated and fail honestly with their
measured values.
"""

import os
import pickle
import time
from pathlib import Path

import numpy as np
import pytest

from equil.grid import ChannelGrid, Field, integrate
from equil.greenkernel import convolve
from equil.penalty import Fprime, PenaltyFamily, transform_constants
from equil.poisson import PoissonSolution, get_solver, solve
from equil.rigidity import critical_layer, energy_identity_stats, layer_lower_bound_margin
from equil.studies import RunManifest, run_sweep
from equil.variational import AdmissibleSpec, SolverOptions, energy, trial_ellipse

EPS_SWEEP = (0.1, 0.05, 0.025)
Q = 0.05
C_TRAVEL = 0.5

_LEDGER = "(expected at desk scale; see notes/decisions ledger)"


def _line(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    msg = f"ACCEPTANCE {num:>2} {name}: {status}" + (f" - {detail}" if detail else "")
    print(msg)
    return ok, msg


def _sweep(mode, c, tmp_factory):
    cache = os.environ.get("EQUIL_ACCEPT_CACHE")
    if cache:
        path = Path(cache) / f"{mode}.pkl"
        if path.exists():
            with open(path, "rb") as fh:
                return pickle.load(fh)
    man = RunManifest(
        mode=mode, c=c, eps_list=EPS_SWEEP, q=Q, nx=513, ny=129, Lx=8.0,
        solver=SolverOptions(), refine_check=True,
    )
    res = run_sweep(man, tmp_factory.mktemp(f"acc_{mode}"), make_plots=False)
    if cache:
        Path(cache).mkdir(parents=True, exist_ok=True)
        with open(Path(cache) / f"{mode}.pkl", "wb") as fh:
            pickle.dump(res, fh)
    return res


@pytest.fixture(scope="session")
def steady(tmp_path_factory):
    return _sweep("steady", 0.0, tmp_path_factory)


@pytest.fixture(scope="session")
def traveling(tmp_path_factory):
    return _sweep("traveling", C_TRAVEL, tmp_path_factory)


def test_criterion_01_solver_cross_validation():
    t0 = time.time()
    g = ChannelGrid(129, 65, 8.0)
    X, Y = g.meshgrid()
    inputs = [
        np.exp(-(X**2) / 1.5 - (Y / 0.35) ** 2) * (1 - Y**2),
        (np.exp(-((X - 1) ** 2) - (Y / 0.3) ** 2)
         + 0.7 * np.exp(-((X + 1.3) ** 2) - ((Y - 0.2) / 0.3) ** 2)) * (1 - Y**2),
        np.sin(2 * np.pi * X / 8) * np.exp(-(X**2) / 4) * (1 - Y**2) ** 2,
    ]
    worst = 0.0
    for w in inputs:
        f = Field(g, w)
        ps = solve(f).psi.values
        pc = convolve(f).values
        num = np.sqrt(integrate(Field(g, (ps - pc) ** 2)))
        den = np.sqrt(integrate(Field(g, ps**2)))
        worst = max(worst, num / den)
    elapsed = time.time() - t0
    ok, msg = _line(1, "solver cross-validation",
                    worst <= 1e-3 and elapsed < 30.0,
                    f"max rel L2 {worst:.2e} (tol 1e-3), {elapsed:.1f}s (< 30s)")
    assert ok, msg


def test_criterion_02_penalty_suite():
    consts = {eps: transform_constants(PenaltyFamily(eps, Q)) for eps in EPS_SWEEP}
    # linear branch exactness (inverse is |log eps|^2 eps^(q-1) s above the break)
    lin_err = 0.0
    for eps in EPS_SWEEP:
        fam = PenaltyFamily(eps, Q)
        s = np.linspace(fam.slope, 5 * fam.slope, 101)
        lin_err = max(lin_err, float(np.max(np.abs(Fprime(fam, s) * fam.slope / s - 1.0))))
    gap_ok = all(c["scaled_gap"] <= 10.0 for c in consts.values())
    lin_ok = all(c["linear_bound"] <= 2.0 for c in consts.values())
    convex_ok = all(c["min_fp_step"] > 0.0 for c in consts.values())
    stable = True
    for key in ("scaled_gap", "linear_bound"):
        vals = [c[key] for c in consts.values()]
        if max(vals) > 1e-12:
            stable &= max(vals) / max(min(vals), 1e-12) <= 2.0
    ok, msg = _line(2, "penalty suite",
                    gap_ok and lin_ok and convex_ok and stable and lin_err < 1e-12,
                    f"gap<=10 {gap_ok}, F<=2s {lin_ok}, convex {convex_ok}, "
                    f"stable x2 {stable}, linear-branch err {lin_err:.1e}")
    assert ok, msg


def _positivity_energies(center):
    out = {}
    for eps in EPS_SWEEP:
        fam = PenaltyFamily(eps, Q)
        spec = AdmissibleSpec(eps, Q, center=center)
        ny = max(129, int(np.ceil(8.0 / eps)) | 1)
        g = ChannelGrid(513, ny, 16.0)  # the seed ellipse needs the wider box
        eb = energy(trial_ellipse(g, spec, fam), spec, fam)
        out[eps] = (eb.total, 0.01 * fam.L * eps**4)
    return out


def test_criterion_03_positivity():
    res = _positivity_energies(0.0)
    ok_all = all(tot > 0 and tot >= floor for tot, floor in res.values())
    detail = ", ".join(
        f"eps={e:g}: E={t:.3e} vs floor {f:.1e}" for e, (t, f) in res.items()
    )
    ok, msg = _line(3, "seed-ellipse positivity", ok_all, detail + " " + _LEDGER)
    assert ok, msg


def _criterion_4(rows, num, tag):
    checks, details = [], []
    for r in rows:
        eps = r["eps"]
        fam = PenaltyFamily(eps, Q)
        cap = eps ** (1 - Q)
        sub = {
            "el_res": r["el_res"] <= 0.05,
            "el_viol": r["el_viol"] <= 0.05,
            "amp": r["max_amp"] < 0.9 * cap,
            "alpha>0": r["alpha"] > 0.0,
            "alpha_size": r["alpha_over_eps2L"] >= 0.05,
            "claim": r["claim_integral_over_eps2"] <= 20.0,
        }
        checks.append(all(sub.values()))
        bad = [k for k, v in sub.items() if not v]
        details.append(
            f"eps={eps:g}: alpha={r['alpha']:.2e}, el|.|={abs(r['el_res']):.1e}"
            + (f", failing: {bad}" if bad else "")
        )
    ok, msg = _line(num, f"maximizer structure ({tag})", all(checks),
                    "; ".join(details) + " " + _LEDGER)
    assert ok, msg


def test_criterion_04_maximizer_structure(steady):
    _criterion_4(steady.rows, 4, "steady")


def _steadiness(rows, num, tag):
    oks, details = [], []
    for r in rows:
        res_c, res_f = r["transport_res"], r.get("transport_res_fine", np.nan)
        eps = r["eps"]
        # advective residual scale of the state; below it the field is steady
        # to roundoff and refinement measures noise against noise
        floor = 1e-10 * r["max_amp"] / (eps / 6.0)
        if np.isfinite(res_f) and res_c <= floor and res_f <= floor:
            oks.append(True)
            details.append(f"eps={eps:g}: steady to roundoff ({res_c:.1e})")
            continue
        order = np.log2(res_c / res_f) if np.isfinite(res_f) and res_f > 0 else np.nan
        oks.append(bool(order >= 1.0))
        details.append(f"eps={eps:g}: order {order:.2f}")
    ok, msg = _line(num, f"steadiness under refinement ({tag})", all(oks), "; ".join(details))
    assert ok, msg


def test_criterion_05_steadiness(steady):
    _steadiness(steady.rows, 5, "steady")


_FIT_CHECKS = [
    ("norm:Lp:s=0:p=1:k=0", 2.0, 0.2, "L1"),
    ("norm:Lp:s=0:p=inf:k=0", 1.0 - 2 * Q, 0.2, "Linf"),
    ("norm:DerivSup:s=0:p=inf:k=1", -2 * Q, 0.3, "grad Linf"),
    ("norm:Wsp_gagliardo:s=0.5:p=2:k=0", 1.0 - 2 * Q, 0.15, "W(0.5,2)"),
    ("norm:Wsp_gagliardo:s=1:p=2:k=0", 0.5 - 2 * Q, 0.15, "W(1,2)"),
    ("norm:Wsp_gagliardo:s=1.4:p=2:k=0", 0.1 - 2 * Q, 0.15, "W(1.4,2)"),
    ("supp_y", 1.0, 0.2, "supp_y"),
]


def _criterion_6(res, num, tag):
    fits = {f.quantity: f for f in res.fits}
    oks, details = [], []
    for key, pred, tol, label in _FIT_CHECKS:
        f = fits.get(key)
        if f is None:
            oks.append(False)
            details.append(f"{label}: missing")
            continue
        good = abs(f.slope - pred) <= tol and f.r2 >= 0.9
        oks.append(good)
        details.append(f"{label}: {f.slope:+.3f} vs {pred:+.2f}+-{tol}")
    sx = [r["supp_x"] for r in res.rows]  # eps decreasing along the sweep
    mono = all(b >= a - 1e-12 for a, b in zip(sx, sx[1:]))
    oks.append(mono)
    details.append(f"supp_x nonincreasing in eps: {mono}")
    ok, msg = _line(num, f"scaling fits ({tag})", all(oks),
                    "; ".join(details) + " " + _LEDGER)
    assert ok, msg


def test_criterion_06_scaling_fits(steady):
    _criterion_6(steady, 6, "steady")


def _criterion_7(res, num, tag):
    lo, hi = 1.5 - 2 * Q - 0.2, 1.6
    s0 = None if res.witness is None else res.witness["s0"]
    in_window = s0 is not None and lo <= s0 <= hi
    fits = {f.quantity: f for f in res.fits}
    c09 = fits.get("norm:Holder:s=0.9:p=inf:k=0")
    c15 = fits.get("norm:Holder:s=0.5:p=inf:k=1")
    shrink = c09 is not None and c09.slope > 0.0
    grow = c15 is not None and c15.slope < 0.0
    detail = (
        f"s0(2)={s0 if s0 is None else f'{s0:.3f}'} in [{lo:.2f},{hi:.2f}]: {in_window}; "
        f"C(0,0.9) slope {None if c09 is None else f'{c09.slope:+.3f}'} > 0: {shrink}; "
        f"C(1,0.5) slope {None if c15 is None else f'{c15.slope:+.3f}'} < 0: {grow}"
    )
    ok, msg = _line(num, f"threshold witness ({tag})", in_window and shrink and grow,
                    detail + " " + _LEDGER)
    assert ok, msg


def test_criterion_07_threshold_witness(steady):
    _criterion_7(steady, 7, "steady")


def test_criterion_08_traveling_parity(traveling):
    # support centering for every run, then criteria 3-7 on the traveling sweep
    center_ok = all(
        abs(r["center_y"] - C_TRAVEL) <= 2.0 * traveling.reports[r["eps"]].omega.grid.hy
        for r in traveling.rows
    )
    pos = _positivity_energies(C_TRAVEL)
    pos_ok = all(t > 0 and t >= f for t, f in pos.values())
    ok0, _ = _line(8, "traveling support centered at c", center_ok,
                   "; ".join(f"eps={r['eps']:g}: center_y={r['center_y']:.4f}" for r in traveling.rows))
    ok1, _ = _line(8, "traveling positivity (crit 3)", pos_ok,
                   ", ".join(f"eps={e:g}: E={t:.2e}" for e, (t, f) in pos.items()) + " " + _LEDGER)
    failures = []
    for fn, args in [
        (_criterion_4, (traveling.rows, 8, "traveling")),
        (_steadiness, (traveling.rows, 8, "traveling")),
        (_criterion_6, (traveling, 8, "traveling")),
        (_criterion_7, (traveling, 8, "traveling")),
    ]:
        try:
            fn(*args)
        except AssertionError as exc:
            failures.append(str(exc).splitlines()[0])
    assert center_ok and ok1 and not failures, (
        f"traveling parity: centered={center_ok}, criteria 3-7 failures: "
        f"{failures} {_LEDGER}"
    )


def test_criterion_09_rigidity_probe(steady):
    # (a) energy-identity self-consistency on a manufactured field
    g = ChannelGrid(257, 129, 6.0)
    X, Y = g.meshgrid()
    psi = np.sin(np.pi * (Y + 1)) * np.exp(-(X**2))
    om = -((4 * X**2 - 2) * np.exp(-(X**2)) * np.sin(np.pi * (Y + 1)) - np.pi**2 * psi)
    st = energy_identity_stats(Field(g, om), solve(Field(g, om)), 0.0)
    ident_ok = abs(st["lhs"] - st["rhs_direct"]) / st["lhs"] <= 0.05

    # (b) contraction ratio >= 1 and (c) layer lower bound on each maximizer
    ratio_ok, layer_ok, details = True, True, []
    for eps, rep in steady.reports.items():
        grid = rep.omega.grid
        sol = get_solver(grid).solve(rep.omega)
        omega_p = Field(grid, -rep.omega.values)
        sol_p = PoissonSolution(
            psi=Field(grid, -sol.psi.values), ux=Field(grid, -sol.ux.values),
            uy=Field(grid, -sol.uy.values), residual_l2=sol.residual_l2,
        )
        stats = energy_identity_stats(omega_p, sol_p, 0.0)
        if stats["ratio"] is None or stats["ratio"] < 1.0:
            ratio_ok = False
            details.append(f"eps={eps:g}: ratio={stats['ratio']}")
        layer = critical_layer(sol_p.ux, 0.0)
        if layer.monotone_ok:
            margin = layer_lower_bound_margin(sol_p.ux, 0.0, layer)
            if margin < -1e-12:
                layer_ok = False
                details.append(f"eps={eps:g}: layer margin {margin:.2e}")
    ok, msg = _line(9, "rigidity probe", ident_ok and ratio_ok and layer_ok,
                    f"identity rel diff {abs(st['lhs']-st['rhs_direct'])/st['lhs']:.3f}; "
                    + ("ratios >= 1" if ratio_ok else "; ".join(details))
                    + " " + _LEDGER)
    assert ok, msg


def test_invariant_derivative_lower_bounds(steady):
    # module invariant (not a numbered criterion): the fitted sup-norm slopes
    # of the k-th derivatives stay above the one-sided floor 1 - 2q - k - 0.2
    keys = {
        0: "norm:Lp:s=0:p=inf:k=0",
        1: "norm:DerivSup:s=0:p=inf:k=1",
        2: "norm:DerivSup:s=0:p=inf:k=2",
    }
    fits = {f.quantity: f for f in steady.fits}
    oks, details = [], []
    for k, key in keys.items():
        slope = fits[key].slope
        floor = 1.0 - 2 * Q - k - 0.2
        oks.append(slope >= floor)
        details.append(f"k={k}: {slope:+.3f} >= {floor:+.2f}")
    ok, msg = _line(0, "derivative-slope floors (invariant)", all(oks), "; ".join(details))
    assert ok, msg


def test_criterion_10_determinism(tmp_path):
    man = RunManifest(
        mode="steady", c=0.0, eps_list=(0.3, 0.25, 0.2), q=0.25, nx=65, ny=41,
        Lx=4.0, solver=SolverOptions(phase1_steps=4, max_iters=300),
        refine_check=False,
    )
    run_sweep(man, tmp_path / "a", make_plots=False)
    run_sweep(man, tmp_path / "b", make_plots=False)
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    ok, msg = _line(10, "determinism", a == b,
                    f"results.csv byte-identical across reruns: {a == b}")
    assert ok, msg
