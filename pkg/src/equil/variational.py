"""Penalized energy, admissible class, Steiner rearrangement, and the maximizer.

The solver drives the constrained maximization of

    E(w) = 1/2 int w G w  -  1/2 int (y - c)^2 w  -  eps^2 int F(w)

over the class {0 <= w <= amp_cap, mass <= mass_cap, support inside the strip}
in two phases: projected ascent from an elliptical seed with a monotone line
search, then a damped fixed-point iteration on the stationarity map
w = f(eps^-2 (psi - (y-c)^2/2 - alpha)) with alpha solved so the mass
constraint is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import penalty
from .grid import ChannelGrid, Field, gradient_values, integrate_values
from .penalty import PenaltyFamily
from .poisson import PoissonSolution, get_solver


class AdmissibilityError(ValueError):
    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("inadmissible field: " + "; ".join(self.failures))


class ResolutionError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class DegenerateMaximizerError(SolverError):
    pass


@dataclass(frozen=True)
class AdmissibleSpec:
    """Constraint set parameters: amplitude cap, mass cap, support strip."""

    eps: float
    q: float
    center: float = 0.0
    amp_cap: float = None
    mass_cap: float = None
    strip_halfwidth: float = None

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.q <= 0.5:
            raise ValueError(f"q must lie in (0, 1/2], got {self.q}")
        scale = self.eps ** (1.0 - self.q)
        if self.amp_cap is None:
            object.__setattr__(self, "amp_cap", scale)
        if self.mass_cap is None:
            object.__setattr__(self, "mass_cap", self.eps**2)
        if self.strip_halfwidth is None:
            object.__setattr__(self, "strip_halfwidth", scale)
        if not (self.amp_cap > 0 and self.mass_cap > 0 and self.strip_halfwidth > 0):
            raise ValueError("amp_cap, mass_cap, strip_halfwidth must be positive")
        if abs(self.center) + self.strip_halfwidth >= 1.0:
            raise ValueError(
                f"strip |y - {self.center}| <= {self.strip_halfwidth} leaves the channel"
            )


@dataclass(frozen=True)
class EnergyBreakdown:
    e1: float  # self energy, nonnegative for admissible fields
    e2: float  # shear interaction, nonpositive
    e3: float  # penalty, nonpositive

    @property
    def total(self) -> float:
        return self.e1 + self.e2 + self.e3


@dataclass(frozen=True)
class SolveReport:
    """Converged maximizer with its stationarity and support diagnostics."""

    omega: Field
    psi: Field
    alpha: float
    energy: EnergyBreakdown
    el_residual_on_supp: float
    el_violation_off_supp: float
    supp_x_halfwidth: float
    supp_y_halfwidth: float
    max_amp: float
    mass: float
    iterations: int
    converged: bool
    spec: AdmissibleSpec
    phase1_energies: tuple = ()
    truncation_warning: bool = False


@dataclass(frozen=True)
class SolverOptions:
    theta: float = 0.3
    max_iters: int = 5000
    tol: float = 1e-8
    steiner_every: int = 10
    phase1_steps: int = 40
    support_rtol: float = 1e-8  # support threshold relative to max amplitude


def check_admissible(omega: Field, spec: AdmissibleSpec, rtol: float = 1e-9):
    """Return the list of violated constraints (empty when admissible)."""
    v = omega.values
    g = omega.grid
    fails = []
    if v.min() < -rtol * spec.amp_cap:
        fails.append(f"negative values down to {v.min():.3e}")
    if v.max() > spec.amp_cap * (1.0 + rtol):
        fails.append(f"amplitude {v.max():.3e} exceeds cap {spec.amp_cap:.3e}")
    mass = integrate_values(g, v)
    if mass > spec.mass_cap * (1.0 + 1e-6):
        fails.append(f"mass {mass:.3e} exceeds cap {spec.mass_cap:.3e}")
    outside = np.abs(g.y[None, :] - spec.center) > spec.strip_halfwidth
    if np.any(np.abs(v[:, :]) * outside > rtol * spec.amp_cap):
        fails.append("support leaves the admissible strip")
    return fails


def _energy_values(
    w: np.ndarray,
    psi: np.ndarray,
    grid: ChannelGrid,
    spec: AdmissibleSpec,
    fam: PenaltyFamily,
) -> EnergyBreakdown:
    pot = (grid.y[None, :] - spec.center) ** 2
    e1 = 0.5 * integrate_values(grid, w * psi)
    e2 = -0.5 * integrate_values(grid, pot * w)
    fw = np.zeros_like(w)
    nz = w > 0.0
    if np.any(nz):
        fw[nz] = penalty.F(fam, w[nz])
    e3 = -fam.eps**2 * integrate_values(grid, fw)
    return EnergyBreakdown(e1, e2, e3)


def energy(
    omega: Field,
    spec: AdmissibleSpec,
    fam: PenaltyFamily,
    solution: PoissonSolution | None = None,
) -> EnergyBreakdown:
    """Energy breakdown of an admissible field (raises if inadmissible)."""
    fails = check_admissible(omega, spec)
    if fails:
        raise AdmissibilityError(fails)
    if solution is None:
        solution = get_solver(omega.grid).solve(omega)
    return _energy_values(omega.values, solution.psi.values, omega.grid, spec, fam)


def trial_ellipse(grid: ChannelGrid, spec: AdmissibleSpec, fam: PenaltyFamily) -> Field:
    """Flat elliptical seed with mass eps^2 and amplitude below the cap.

    Semi-axes eps^q L^2 (horizontal) and eps (vertical) about y = center.
    Boundary cells carry the covered area fraction so the quadrature mass is
    second-order accurate.
    """
    eps, L = fam.eps, fam.L
    a = eps**fam.q * L**2
    b = eps
    if grid.hy > b / 4.0 or grid.hx > a / 8.0:
        raise ResolutionError(
            f"grid spacing ({grid.hx:.3g}, {grid.hy:.3g}) under-resolves the "
            f"seed ellipse ({a:.3g}, {b:.3g})"
        )
    amp = eps ** (1.0 - fam.q) / (np.pi * L**2)

    X, Y = grid.meshgrid()
    r2 = (X / a) ** 2 + ((Y - spec.center) / b) ** 2
    vals = np.where(r2 <= 1.0, amp, 0.0)

    # cells straddling the boundary get a 4x4 subcell coverage fraction
    rim = (np.abs(X) <= a + grid.hx) & (np.abs(Y - spec.center) <= b + grid.hy)
    rim &= np.abs(r2 - 1.0) < 4.0 * (grid.hx / a + grid.hy / b)
    ri, rj = np.nonzero(rim)
    if ri.size:
        off = (np.arange(4) + 0.5) / 4.0 - 0.5
        ox, oy = np.meshgrid(off * grid.hx, off * grid.hy, indexing="ij")
        sx = grid.x[ri][:, None, None] + ox[None, :, :]
        sy = grid.y[rj][:, None, None] + oy[None, :, :]
        inside = (sx / a) ** 2 + ((sy - spec.center) / b) ** 2 <= 1.0
        vals[ri, rj] = amp * inside.mean(axis=(1, 2))

    # residual quadrature error can leave the mass a hair over the cap
    mass = integrate_values(grid, vals)
    if mass > spec.mass_cap:
        vals *= spec.mass_cap / mass
    return Field(grid, vals)


def _steiner_values(values: np.ndarray) -> np.ndarray:
    if values.min() < 0.0:
        raise ValueError("Steiner rearrangement requires a nonnegative field")
    nx = values.shape[0]
    m = (nx - 1) // 2
    # placement order x = 0, +hx, -hx, +2hx, -2hx, ...
    pos = np.empty(nx, dtype=int)
    pos[0] = m
    ks = np.arange(1, m + 1)
    pos[2 * ks - 1] = m + ks
    pos[2 * ks] = m - ks
    ranked = -np.sort(-values, axis=0)
    out = np.empty_like(values)
    out[pos, :] = ranked
    return out


def steiner(omega: Field) -> Field:
    """Row-wise symmetric-decreasing rearrangement about x = 0."""
    return Field(omega.grid, _steiner_values(omega.values))


def _project(w, spec: AdmissibleSpec, grid: ChannelGrid, strip_mask):
    w = np.clip(w, 0.0, spec.amp_cap)
    w *= strip_mask
    mass = integrate_values(grid, w)
    if mass > spec.mass_cap:
        w *= spec.mass_cap / mass
    return w


def _solve_multiplier(bvals, strip_w, fam, spec, alpha_prev=None):
    """Find alpha with mass(alpha) = mass_cap for the clamped stationarity map.

    mass(alpha) is continuous and strictly decreasing, so a bracketed root
    search is reliable; the previous alpha seeds the bracket.
    """
    inv_eps2 = 1.0 / fam.eps**2
    cap = spec.amp_cap

    def mass_of(alpha):
        vals = np.minimum(penalty.f_eval(fam, inv_eps2 * (bvals - alpha)), cap)
        return float(np.sum(vals * strip_w))

    target = spec.mass_cap
    hi = float(bvals.max())  # mass(hi) = 0 < target
    lo = hi - fam.eps**2 if alpha_prev is None else min(alpha_prev, hi - 1e-30)
    step = max(fam.eps**2, abs(hi - lo))
    for _ in range(200):
        if mass_of(lo) >= target:
            break
        lo -= step
        step *= 2.0
    else:
        raise SolverError("failed to bracket the mass multiplier")
    scale = max(abs(lo), abs(hi), fam.eps**2)
    return brentq(
        lambda a: mass_of(a) - target, lo, hi, xtol=1e-14 * scale, rtol=8.9e-16
    )


def maximize(
    grid: ChannelGrid,
    spec: AdmissibleSpec,
    fam: PenaltyFamily,
    opts: SolverOptions | None = None,
) -> SolveReport:
    """Run the two-phase constrained maximization and assemble the report."""
    opts = opts or SolverOptions()
    solver = get_solver(grid)
    y = grid.y[None, :]
    pot = (y - spec.center) ** 2
    strip_mask = (np.abs(y - spec.center) <= spec.strip_halfwidth).astype(float)
    inv_eps2 = 1.0 / fam.eps**2

    w = trial_ellipse(grid, spec, fam).values.copy()

    def ener(wv, psi):
        return _energy_values(wv, psi, grid, spec, fam)

    # phase 1: projected ascent with a backtracking, nondecreasing line search
    psi = solver.solve_values(w)
    e_cur = ener(w, psi).total
    phase1 = [e_cur]
    for step in range(opts.phase1_steps):
        fp = np.zeros_like(w)
        nz = w > 0.0
        fp[nz] = penalty.Fprime(fam, w[nz])
        H = psi - 0.5 * pot - fam.eps**2 * fp
        hmax = np.max(np.abs(H))
        if hmax == 0.0:
            break
        t = 0.5 * spec.amp_cap / hmax
        accepted = False
        for _ in range(25):
            w_try = _project(w + t * H, spec, grid, strip_mask)
            psi_try = solver.solve_values(w_try)
            e_try = ener(w_try, psi_try).total
            if e_try >= e_cur - 1e-14 * abs(e_cur):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # stationary for the projected ascent
        w, psi, e_cur = w_try, psi_try, e_try
        if (step + 1) % opts.steiner_every == 0:
            ws = _steiner_values(w)
            psis = solver.solve_values(ws)
            es = ener(ws, psis).total
            if es >= e_cur - 1e-12 * abs(e_cur):
                w, psi, e_cur = ws, psis, es
        phase1.append(e_cur)
    if any(b < a - 1e-12 * abs(a) for a, b in zip(phase1, phase1[1:])):
        raise SolverError("phase-1 energy sequence decreased")

    # phase 2: damped fixed point on the stationarity map, active mass
    strip_cols = np.nonzero(strip_mask.ravel())[0]
    strip_w = np.outer(grid.wx, grid.wy[strip_cols])
    alpha = None
    iterations = 0
    converged = False
    for it in range(opts.max_iters):
        iterations = it + 1
        psi = solver.solve_values(w)
        b = psi - 0.5 * pot
        alpha = _solve_multiplier(b[:, strip_cols], strip_w, fam, spec, alpha)
        w_el = np.zeros_like(w)
        w_el[:, strip_cols] = np.minimum(
            penalty.f_eval(fam, inv_eps2 * (b[:, strip_cols] - alpha)), spec.amp_cap
        )
        w_new = (1.0 - opts.theta) * w + opts.theta * w_el
        denom = integrate_values(grid, np.abs(w))
        delta = integrate_values(grid, np.abs(w_new - w)) / max(denom, 1e-300)
        w = w_new
        if delta <= opts.tol:
            converged = True
            break

    mass = integrate_values(grid, w)
    if mass < 1e-3 * spec.mass_cap:
        raise DegenerateMaximizerError(
            f"maximizer collapsed: mass {mass:.3e} < 1e-3 * {spec.mass_cap:.3e}"
        )

    omega = Field(grid, w)
    solution = solver.solve(omega)
    return _assemble_report(
        omega, solution, alpha, spec, fam, iterations, converged, tuple(phase1), opts
    )


def _assemble_report(
    omega, solution, alpha, spec, fam, iterations, converged, phase1, opts
) -> SolveReport:
    grid = omega.grid
    w = omega.values
    pot = (grid.y[None, :] - spec.center) ** 2
    fp = np.zeros_like(w)
    nz = w > 0.0
    fp[nz] = penalty.Fprime(fam, w[nz])
    H = solution.psi.values - 0.5 * pot - fam.eps**2 * fp

    max_amp = float(w.max())
    thr = opts.support_rtol * max_amp
    supp = w > thr
    if np.any(supp):
        el_res = float(np.max(np.abs(H[supp] - alpha)) / alpha)
        xs = grid.x[np.any(supp, axis=1)]
        ys = grid.y[np.any(supp, axis=0)]
        sx = float(np.max(np.abs(xs)))
        sy = float(np.max(np.abs(ys - spec.center)))
    else:
        el_res = float("nan")
        sx = sy = 0.0
    off = ~supp
    el_vio = float(np.max(np.clip(H[off] - alpha, 0.0, None)) / alpha)

    return SolveReport(
        omega=omega,
        psi=solution.psi,
        alpha=float(alpha),
        energy=_energy_values(w, solution.psi.values, grid, spec, fam),
        el_residual_on_supp=el_res,
        el_violation_off_supp=el_vio,
        supp_x_halfwidth=sx,
        supp_y_halfwidth=sy,
        max_amp=max_amp,
        mass=integrate_values(grid, w),
        iterations=iterations,
        converged=converged,
        spec=spec,
        phase1_energies=phase1,
        truncation_warning=solution.truncation_warning,
    )


def multiplier_diagnostics(rep: SolveReport, fam: PenaltyFamily) -> dict:
    """Multiplier size and the quadratic-gap integral, in their natural units."""
    w = rep.omega.values
    grid = rep.omega.grid
    gap = np.zeros_like(w)
    nz = w > 0.0
    if np.any(nz):
        gap[nz] = w[nz] * penalty.Fprime(fam, w[nz]) - 2.0 * penalty.F(fam, w[nz])
    return {
        "alpha_over_eps2L": rep.alpha / (fam.eps**2 * fam.L),
        "claim_integral_over_eps2": integrate_values(grid, gap) / fam.eps**2,
    }


def support_extents(rep: SolveReport, fam: PenaltyFamily, threshold_rtol: float = 1e-8) -> dict:
    """Support rectangle of the maximizer with scale-normalized ratios.

    rx multiplies the x half-width by |log eps|; ry divides the y half-width
    by eps |log eps|^(1/2).  Includes a factor-10 threshold sensitivity pair.
    """
    grid = rep.omega.grid
    w = rep.omega.values
    c = rep.spec.center
    out = {}
    for tag, rt in (("", threshold_rtol), ("_thr_lo", threshold_rtol / 10), ("_thr_hi", threshold_rtol * 10)):
        supp = w > rt * rep.max_amp
        if not np.any(supp):
            out[f"supp_x{tag}"] = 0.0
            out[f"supp_y{tag}"] = 0.0
            continue
        xi = np.any(supp, axis=1)
        yi = np.any(supp, axis=0)
        out[f"supp_x{tag}"] = float(np.max(np.abs(grid.x[xi])))
        out[f"supp_y{tag}"] = float(np.max(np.abs(grid.y[yi] - c)))
        if tag == "":
            out["center_x"] = float(0.5 * (grid.x[xi].min() + grid.x[xi].max()))
            out["center_y"] = float(0.5 * (grid.y[yi].min() + grid.y[yi].max()))
    out["rx"] = out["supp_x"] * fam.L
    out["ry"] = out["supp_y"] / (fam.eps * np.sqrt(fam.L))
    return out


def transport_residual(omega: Field, solution: PoissonSolution, center: float = 0.0) -> float:
    """L2 norm of the steady transport operator in the co-moving frame.

    The physical wave is the sign-flipped profile, so the advecting field for
    profile quantities is ((y - c) - ux, -uy); the returned norm is invariant
    under the flip.
    """
    grid = omega.grid
    dwdx, dwdy = gradient_values(grid, omega.values)
    rel = grid.y[None, :] - center - solution.ux.values
    res = rel * dwdx - solution.uy.values * dwdy
    return float(np.sqrt(integrate_values(grid, res**2)))


def gradient_check(
    omega: Field,
    spec: AdmissibleSpec,
    fam: PenaltyFamily,
    n_dirs: int = 5,
    t: float = 1e-6,
    seed: int = 0,
) -> float:
    """Max relative mismatch between centered energy differences and int(H d).

    Perturbations are mean-zero on the bulk of the support so admissibility is
    preserved for small t.
    """
    rng = np.random.default_rng(seed)
    grid = omega.grid
    w = omega.values
    solver = get_solver(grid)
    psi = solver.solve_values(w)
    fp = np.zeros_like(w)
    nz = w > 0.0
    fp[nz] = penalty.Fprime(fam, w[nz])
    pot = (grid.y[None, :] - spec.center) ** 2
    H = psi - 0.5 * pot - fam.eps**2 * fp

    core = w > 0.2 * w.max()
    worst = 0.0
    scale = w.max()
    for _ in range(n_dirs):
        d = np.zeros_like(w)
        d[core] = rng.standard_normal(int(core.sum()))
        d[core] -= d[core].mean()
        d *= scale / max(np.max(np.abs(d)), 1e-300)
        ep = _energy_values(w + t * d, solver.solve_values(w + t * d), grid, spec, fam)
        em = _energy_values(w - t * d, solver.solve_values(w - t * d), grid, spec, fam)
        fd = (ep.total - em.total) / (2.0 * t)
        lin = integrate_values(grid, H * d)
        worst = max(worst, abs(fd - lin) / max(abs(lin), 1e-300))
    return worst
