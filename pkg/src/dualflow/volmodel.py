"""Local volatility functions with analytic spatial derivatives.

Only parametric forms with closed-form first spatial derivatives are
admitted; membership in the regularity class (bounded ``x^k d^k/dx^k`` up to
order 3) is diagnosed numerically on a grid by :func:`vol_class_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class VolEval(NamedTuple):
    sigma: np.ndarray
    dsigma: np.ndarray   # d sigma / dx
    eta: np.ndarray      # x * sigma
    deta: np.ndarray     # d eta / dx = sigma + x * dsigma


class VolModel:
    """Base interface: sigma(t, x) and its x-derivative, vectorized."""

    def sigma(self, t, x):
        raise NotImplementedError

    def dsigma_dx(self, t, x):
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False

    @property
    def is_time_homogeneous(self) -> bool:
        return False


@dataclass(frozen=True)
class ConstantVol(VolModel):
    """sigma(t, x) = sigma0.

    sigma0 = 0 is allowed for degenerate deterministic configurations; the
    duality and PIDE entry points require strict positivity and check it.
    """

    sigma0: float

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")

    def sigma(self, t, x):
        return np.full(np.broadcast_shapes(np.shape(t), np.shape(x)), self.sigma0)

    def dsigma_dx(self, t, x):
        return np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x)))

    @property
    def is_constant(self):
        return True

    @property
    def is_time_homogeneous(self):
        return True


@dataclass(frozen=True)
class TanhSmileVol(VolModel):
    """sigma(t, x) = a + b * tanh(c * ln(x / x0) + d * t), with a > |b|.

    Bounded together with all ``x^k d^k/dx^k`` derivatives, so it is a
    genuine member of the regularity class (unlike power-law smiles).
    """

    a: float
    b: float
    c: float
    d: float = 0.0
    x0: float = 1.0

    def __post_init__(self):
        if not self.a > abs(self.b):
            raise ValueError("need a > |b| for positivity")
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")

    def _u(self, t, x):
        return self.c * np.log(np.asarray(x, float) / self.x0) + self.d * np.asarray(t, float)

    def sigma(self, t, x):
        return self.a + self.b * np.tanh(self._u(t, x))

    def dsigma_dx(self, t, x):
        u = self._u(t, x)
        sech2 = 1.0 - np.tanh(u) ** 2
        return self.b * self.c * sech2 / np.asarray(x, float)

    @property
    def is_time_homogeneous(self):
        return self.d == 0.0


@dataclass(frozen=True)
class TimeScaledVol(VolModel):
    """sigma(t, x) = f(t) * g(ln x) with f polynomial in t and g a constant
    plus Gaussian bumps: g(u) = g_const + sum amp * exp(-(u - center)^2 / (2 w^2)).

    Positivity over the diagnostic box is checked at construction.
    """

    f_coeffs: tuple[float, ...]
    g_const: float
    g_bumps: tuple[tuple[float, float, float], ...] = ()
    t_max: float = 2.0
    x_range: tuple[float, float] = (0.05, 20.0)

    def __post_init__(self):
        if not self.f_coeffs:
            raise ValueError("f_coeffs must be non-empty")
        for _, _, w in self.g_bumps:
            if w <= 0:
                raise ValueError("bump widths must be positive")
        ts = np.linspace(0.0, self.t_max, 41)
        xs = np.geomspace(self.x_range[0], self.x_range[1], 81)
        vals = self.sigma(ts[:, None], xs[None, :])
        if np.min(vals) <= 0:
            raise ValueError("sigma(t, x) must be positive on the diagnostic box")

    def _f(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, float),
                                                np.asarray(self.f_coeffs))

    def _g(self, u):
        out = np.full_like(np.asarray(u, float), self.g_const, dtype=float)
        for amp, center, w in self.g_bumps:
            out = out + amp * np.exp(-0.5 * ((u - center) / w) ** 2)
        return out

    def _dg(self, u):
        out = np.zeros_like(np.asarray(u, float), dtype=float)
        for amp, center, w in self.g_bumps:
            out = out - amp * ((u - center) / w**2) * np.exp(-0.5 * ((u - center) / w) ** 2)
        return out

    def sigma(self, t, x):
        return self._f(t) * self._g(np.log(np.asarray(x, float)))

    def dsigma_dx(self, t, x):
        x = np.asarray(x, float)
        return self._f(t) * self._dg(np.log(x)) / x

    @property
    def is_time_homogeneous(self):
        return len(self.f_coeffs) == 1


def vol_eval(v: VolModel, t, x) -> VolEval:
    """(sigma, dsigma/dx, eta = x sigma, deta/dx) at (t, x); x must be > 0."""
    x_arr = np.asarray(x, float)
    if np.any(x_arr <= 0):
        raise ValueError("x must be positive")
    s = np.asarray(v.sigma(t, x_arr), float)
    ds = np.asarray(v.dsigma_dx(t, x_arr), float)
    return VolEval(s, ds, x_arr * s, s + x_arr * ds)


@dataclass
class VolClassReport:
    """sup_{grid} |x^k d^k sigma / dx^k| for k = 0..3 plus a refinement
    stability ratio (coarse sup / fine sup) per order."""

    sups: tuple[float, float, float, float]
    refined_sups: tuple[float, float, float, float]
    min_sigma: float
    max_deta: float
    passed: bool

    @property
    def stability_ratios(self):
        return tuple(c / f if f > 0 else 1.0
                     for c, f in zip(self.sups, self.refined_sups))


def _scaled_derivs_logspace(v: VolModel, t_grid, u_grid, du):
    """|x^k d^k sigma/dx^k| via log-space finite differences.

    With s(u) = sigma(t, e^u):  x s' = s_u,  x^2 s'' = s_uu - s_u,
    x^3 s''' = s_uuu - 3 s_uu + 2 s_u.
    """
    tt = np.asarray(t_grid, float)[:, None]
    uu = np.asarray(u_grid, float)[None, :]

    def s(shift):
        return np.asarray(v.sigma(tt, np.exp(uu + shift * du)), float)

    s0 = s(0)
    sp, sm = s(1), s(-1)
    sp2, sm2 = s(2), s(-2)
    s_u = (sp - sm) / (2 * du)
    s_uu = (sp - 2 * s0 + sm) / du**2
    s_uuu = (sp2 - 2 * sp + 2 * sm - sm2) / (2 * du**3)
    k0 = np.abs(s0)
    k1 = np.abs(s_u)
    k2 = np.abs(s_uu - s_u)
    k3 = np.abs(s_uuu - 3 * s_uu + 2 * s_u)
    return (float(k0.max()), float(k1.max()), float(k2.max()), float(k3.max())), float(s0.min())


def vol_class_check(v: VolModel, t_grid, x_grid, sup_bound: float = 50.0,
                    stability_rtol: float = 0.10) -> VolClassReport:
    """Numerical membership diagnostic for the regularity class.

    Checks that sup |x^k d_x^k sigma| is finite for k = 0..3 and stable when
    the evaluation grid is refined (ratio within ``stability_rtol``), and
    that sigma stays positive on the grid.
    """
    x_grid = np.asarray(x_grid, float)
    if np.any(x_grid <= 0):
        raise ValueError("x grid must be positive")
    u = np.log(x_grid)
    du = 1e-3
    sups, min_sig = _scaled_derivs_logspace(v, t_grid, u, du)

    t_fine = np.linspace(np.min(t_grid), np.max(t_grid), 2 * len(np.atleast_1d(t_grid)))
    u_fine = np.linspace(u.min(), u.max(), 2 * len(u))
    refined, _ = _scaled_derivs_logspace(v, t_fine, u_fine, du)

    deta = np.abs(np.asarray(
        vol_eval(v, np.asarray(t_grid, float)[:, None], x_grid[None, :]).deta))
    stable = all(
        abs(c - f) <= stability_rtol * max(f, 1e-12) + 1e-9
        for c, f in zip(sups, refined))
    passed = (min_sig > 0.0 and all(np.isfinite(sups)) and
              max(sups) <= sup_bound and stable)
    return VolClassReport(sups, refined, min_sig, float(deta.max()), passed)
