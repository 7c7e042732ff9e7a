"""Vorticity profile family f and its penalty transform (inverse and antiderivative).

The family is linear with a small slope above t = 1 and glued smoothly to zero
on (0, 1) by the standard bump quotient phi(t) = h(t) / (h(t) + h(1-t)) with
h(s) = exp(-1/s).  Everything downstream needs the inverse F' of f and its
antiderivative F, which are served from dense monotone tables plus the exact
linear branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

_TABLE_N = 4096        # inversion bracket table on [0, 1]
_PHI_TABLE_N = 65536   # cumulative-integral table for F


def _h(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    with np.errstate(under="ignore"):
        out[pos] = np.exp(-1.0 / s[pos])
    return out


def _phi(t):
    t = np.asarray(t, dtype=float)
    ht = _h(t)
    hc = _h(1.0 - t)
    den = ht + hc
    den[den == 0.0] = 1.0  # only hit outside (0, 1) where the value is unused
    return ht / den


def glue(t):
    """Smooth monotone ramp: 0 for t <= 0, t for t >= 1, t*phi(t) between."""
    shape = np.shape(t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    mid = (t > 0.0) & (t < 1.0)
    out = np.where(t >= 1.0, t, 0.0)
    out[mid] = t[mid] * _phi(t[mid])
    return out.reshape(shape)


def glue_prime(t):
    shape = np.shape(t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    ht, hc = _h(tm), _h(1.0 - tm)
    den = ht + hc
    with np.errstate(under="ignore"):
        dht = ht / tm**2
        dhc = hc / (1.0 - tm) ** 2
    phi = ht / den
    dphi = (dht * hc + ht * dhc) / den**2
    out[mid] = phi + tm * dphi
    return out.reshape(shape)


@dataclass(frozen=True)
class PenaltyFamily:
    """Profile family parameters; amplitude scale eps^(1-q), log factor squared."""

    eps: float
    q: float

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.q <= 0.5:
            raise ValueError(f"q must lie in (0, 1/2], got {self.q}")
        # constructor-time monotonicity check of the glue
        t = np.linspace(0.0, 1.0, _TABLE_N + 1)
        g = glue(t)
        if np.any(np.diff(g) < 0.0):
            raise ValueError("glue profile is not monotone on [0, 1]")
        if np.any(np.diff(g[t >= 0.01]) <= 0.0):
            raise ValueError("glue profile is not strictly increasing")

    @property
    def L(self) -> float:
        return abs(np.log(self.eps))

    @property
    def slope(self) -> float:
        return self.eps ** (1.0 - self.q) / self.L**2

    @cached_property
    def _inv_table(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.linspace(0.0, 1.0, _TABLE_N + 1)
        return t, glue(t)

    @cached_property
    def _phi_spline(self) -> CubicSpline:
        t = np.linspace(0.0, 1.0, _PHI_TABLE_N + 1)
        cum = cumulative_simpson(glue(t), x=t, initial=0.0)
        return CubicSpline(t, cum)

    @cached_property
    def F_at_slope(self) -> float:
        # integral of the inverse up to the break: slope * (1 - int_0^1 glue)
        return float(self.slope * (1.0 - self._phi_spline(1.0)))


def f_eval(fam: PenaltyFamily, t):
    """The profile function itself: slope * glue(t)."""
    out = fam.slope * glue(t)
    return float(out) if np.isscalar(t) else out


def _invert_glue(fam: PenaltyFamily, v: np.ndarray) -> np.ndarray:
    """Solve glue(t) = v on [0, 1] by table bracket plus bisection."""
    tt, gg = fam._inv_table
    idx = np.searchsorted(gg, v, side="left")
    idx = np.clip(idx, 1, _TABLE_N)
    lo = tt[idx - 1]
    hi = tt[idx]
    for _ in range(32):  # bracket 2^-12 narrowed to ~6e-14
        mid = 0.5 * (lo + hi)
        below = glue(mid) < v
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return np.where(v <= 0.0, 0.0, out)


def Fprime(fam: PenaltyFamily, s):
    """Inverse of f on [0, inf): table inversion below slope, exact line above."""
    scalar = np.isscalar(s)
    shape = np.shape(s)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0.0):
        raise ValueError("Fprime requires s >= 0")
    lin = s >= fam.slope
    out = np.empty_like(s)
    out[lin] = s[lin] / fam.slope
    if np.any(~lin):
        out[~lin] = _invert_glue(fam, s[~lin] / fam.slope)
    return float(out[0]) if scalar else out.reshape(shape)


def F(fam: PenaltyFamily, s):
    """Antiderivative of Fprime from 0, exact quadratic above the break.

    Below the break F(s) = t(s) s - slope * Phi(t(s)) with Phi the cumulative
    integral of the glue; the expression is first-order insensitive to the
    inversion tolerance.
    """
    scalar = np.isscalar(s)
    shape = np.shape(s)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0.0):
        raise ValueError("F requires s >= 0")
    lin = s >= fam.slope
    out = np.empty_like(s)
    if np.any(lin):
        sl = s[lin]
        out[lin] = fam.F_at_slope + (sl**2 - fam.slope**2) / (2.0 * fam.slope)
    if np.any(~lin):
        snl = s[~lin]
        t = _invert_glue(fam, snl / fam.slope)
        out[~lin] = t * snl - fam.slope * fam._phi_spline(t)
    return float(out[0]) if scalar else out.reshape(shape)


def fprime_bound_check(fam: PenaltyFamily, n: int, t_window=(-0.5, 2.5), samples=20001) -> float:
    """Max of |f^(n)| * |log eps|^2 * eps^(q-1) over a fine sample.

    First derivative analytic, higher orders by repeated centered differences
    of it.  The normalization divides out the family slope, so the result is
    a property of the glue alone.
    """
    if n not in (1, 2, 3, 4):
        raise ValueError("derivative order must be in 1..4")
    t = np.linspace(t_window[0], t_window[1], samples)
    d = fam.slope * glue_prime(t)
    for _ in range(n - 1):
        d = np.gradient(d, t, edge_order=2)
    return float(np.max(np.abs(d)) / fam.slope)


def transform_constants(fam: PenaltyFamily, n_samples: int = 4001) -> dict:
    """Normalized size/convexity constants of the transform, for stability checks.

    scaled_gap     max of (s F'(s) - 2 F(s)) / slope over s in [0, 5 slope]
    linear_bound   max of F(s)/s over 0 < s <= slope
    min_fp_step    min forward difference of F' on the s grid (> 0 iff convex)
    """
    s = np.linspace(0.0, 5.0 * fam.slope, n_samples)
    fp = Fprime(fam, s)
    fv = F(fam, s)
    gap = (s * fp - 2.0 * fv) / fam.slope
    s_low = np.linspace(fam.slope / n_samples, fam.slope, n_samples)
    ratio = F(fam, s_low) / s_low
    return {
        "scaled_gap": float(np.max(gap)),
        "linear_bound": float(np.max(ratio)),
        "min_fp_step": float(np.min(np.diff(fp))),
    }
