"""Closed-form cell values in one dimension, used as ground truth for the lattice solver.

In d = 1 the energy of u on (0, L) with u(0) = 0, u(L) = A L splits the total
variation |A| L between a diffuse channel (cost a(x) per unit) and jumps (cost
theta(x) sigma(s) for a jump of size s).  Both channels are cheapest at their
minimal weights, and sigma is subadditive, so one jump of size s at the point
where theta is minimal and diffuse variation where a is minimal is optimal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrands import (BulkIntegrand, IntegrandPair, Profile, StructuralConstants,
                         SurfaceIntegrand, linear_profile, two_slope_profile)
from .lattice import BoundaryDatum, Grid
from .solver import SolveOptions, minimize


@dataclass(frozen=True)
class PiecewiseConstant:
    """Value values[i] on [breaks[i], breaks[i+1]); periodic with ``period`` if given."""

    breaks: tuple
    values: tuple
    period: float | None = None

    def __post_init__(self):
        b = tuple(float(v) for v in self.breaks)
        v = tuple(float(x) for x in self.values)
        if len(b) != len(v) + 1 or any(q <= p for p, q in zip(b, b[1:])):
            raise ValueError("breaks must be increasing with one more entry than values")
        if min(v) <= 0:
            raise ValueError("weights must be positive")
        if self.period is not None and not math.isclose(b[-1] - b[0], self.period):
            raise ValueError("breaks must span exactly one period")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((0.0, 1.0), (value,), 1.0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            x = self.breaks[0] + np.mod(x - self.breaks[0], self.period)
        idx = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.values) - 1)
        return np.asarray(self.values)[idx]

    def min_on(self, lo: float, hi: float) -> float:
        """Essential infimum on (lo, hi)."""
        if self.period is not None and hi - lo >= self.period:
            return min(self.values)
        best = math.inf
        for i, v in enumerate(self.values):
            a, b = self.breaks[i], self.breaks[i + 1]
            shifts = [0.0]
            if self.period is not None:
                k0 = math.floor((lo - b) / self.period)
                k1 = math.ceil((hi - a) / self.period)
                shifts = [k * self.period for k in range(k0, k1 + 1)]
            if any(min(b + s, hi) > max(a + s, lo) for s in shifts):
                best = min(best, v)
        return best


@dataclass(frozen=True)
class Profile1D:
    a: PiecewiseConstant
    theta: PiecewiseConstant
    sigma: Profile

    def __post_init__(self):
        t = np.linspace(0.0, 10.0, 201)
        s = self.sigma(t)
        if abs(float(s[0])) > 0 or np.any(np.diff(s) < -1e-12) or np.any(np.diff(s, 2) > 1e-9):
            raise ValueError("sigma must vanish at 0 and be nondecreasing and concave")

    @property
    def slope0(self) -> float:
        return float(self.sigma.deriv(np.array(0.0)))

    def constants(self) -> StructuralConstants:
        lo = min(min(self.a.values), min(self.theta.values) * self.sigma.slope_inf)
        hi = max(max(self.a.values), max(self.theta.values) * self.slope0)
        s_inf = self.sigma.slope_inf
        # sigma(t)/t is within intercept/t of s_inf; a positive intercept breaks (g5) for small jumps
        big = 1e6
        intercept = max(float(self.sigma(np.array(big))) - s_inf * big, 0.0)
        c7 = intercept / (2 * s_inf)
        return StructuralConstants(c1=lo, c3=hi, c5=max(self.a.values),
                                   c7=c7, sigma1=max(self.theta.values) * self.slope0)


def pair_from_profile(p: Profile1D) -> IntegrandPair:
    consts = p.constants()
    f = BulkIntegrand.from_radial(lambda x: p.a(np.asarray(x)[..., 0]), linear_profile(1.0),
                                  consts, "heterogeneous")
    g = SurfaceIntegrand.from_radial(lambda x: p.theta(np.asarray(x)[..., 0]), p.sigma,
                                     consts, "heterogeneous")
    return IntegrandPair(f, g, "profile1d", {})


def exact_cell_value_1d(p: Profile1D, A: float, L: float) -> float:
    """min over s in [0, |A| L] of a_min (|A| L - s) + theta_min sigma(s)."""
    if L <= 0:
        raise ValueError("L must be positive")
    total = abs(float(A)) * L
    a_min = p.a.min_on(0.0, L)
    th_min = p.theta.min_on(0.0, L)
    # concave objective: the minimum sits at an endpoint; kinks are included for safety
    cands = [0.0, total] + [k for k in p.sigma.kinks if 0.0 < k < total]
    return min(a_min * (total - s) + th_min * float(p.sigma(np.array(s))) for s in cands)


def validate_lattice_against_oracle(p: Profile1D, A: float, L: float, h_schedule,
                                    opts: SolveOptions | None = None, rel_tol: float = 0.02) -> dict:
    hs = [float(h) for h in h_schedule]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_schedule must be decreasing")
    opts = opts or SolveOptions()
    pair = pair_from_profile(p)
    oracle = exact_cell_value_1d(p, A, L)
    datum = BoundaryDatum.affine(np.array([[float(A)]]))
    rows = []
    for h in hs:
        n = int(round(L / h))
        if not math.isclose(n * h, L):
            raise ValueError(f"h={h} does not divide L={L}")
        grid = Grid.box((0.0,), (L,), h)
        res = minimize(pair, grid, datum, opts)
        gap = abs(res.energy - oracle) / max(abs(oracle), 1e-300)
        rows.append({"h": h, "lattice_value": res.energy, "oracle_value": oracle, "rel_gap": gap})
    # gaps below the solver's resolution count as ties
    slack = 100 * opts.tol_energy
    return {"A": A, "L": L, "oracle": oracle, "rows": rows,
            "finest_ok": bool(rows[-1]["rel_gap"] <= rel_tol),
            "gap_nonincreasing": bool(all(b["rel_gap"] <= a["rel_gap"] + slack
                                          for a, b in zip(rows, rows[1:])))}


def homogeneous_profile() -> Profile1D:
    one = PiecewiseConstant.constant(1.0)
    return Profile1D(one, one, linear_profile(1.0))


def laminate_profile(a_soft: float = 1.0, a_hard: float = 2.0) -> Profile1D:
    a = PiecewiseConstant((0.0, 0.5, 1.0), (a_soft, a_hard), 1.0)
    return Profile1D(a, PiecewiseConstant.constant(1.0), linear_profile(2.0))


def pure_jump_profile() -> Profile1D:
    return Profile1D(PiecewiseConstant.constant(10.0), PiecewiseConstant.constant(1.0),
                     linear_profile(1.0))


def kinked_jump_profile() -> Profile1D:
    return Profile1D(PiecewiseConstant.constant(2.0), PiecewiseConstant.constant(1.0),
                     two_slope_profile(1.0, 0.5, 0.5))
