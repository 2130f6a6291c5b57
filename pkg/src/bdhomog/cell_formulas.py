"""Cell problems on growing cubes and the exact identities they satisfy.

Bulk values use the affine datum on axis-aligned cubes Q(r x, r) with spacing
1/cells_per_unit, so periodic integrands stay commensurate with the lattice.
Surface values use the recession pair and the jump datum on the rotated cube
Q_nu(r x, r); those lattices have an odd number of cells per side so that no
node lies on the jump plane.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrands import (IntegrandPair, frob, recession_pair, rescale_pair, sym_matrix,
                         sym_tensor)
from .lattice import BoundaryDatum, DisplacementField, Grid, apply_datum, assemble_energy
from .report import svg_lines, write_csv
from .solver import SolveOptions, SolveResult, minimize


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def canonical_jump(zeta, nu):
    """Representative of {(zeta, nu), (-zeta, -nu)} with the last nonzero entry of nu positive."""
    zeta = np.asarray(zeta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    nz = np.flatnonzero(nu)
    if nz.size and nu[nz[-1]] < 0:
        return -zeta, -nu
    return zeta, nu


@dataclass(frozen=True, eq=False)
class CellProblem:
    pair: IntegrandPair
    datum: BoundaryDatum
    r: float
    x_anchor: np.ndarray | None = None
    use_recession_pair: bool = False
    cells_per_unit: int = 8

    @property
    def d(self) -> int:
        return self.datum.d

    @property
    def center(self) -> np.ndarray:
        x = np.zeros(self.d) if self.x_anchor is None else np.asarray(self.x_anchor, dtype=float)
        return self.r * x

    def grid(self) -> Grid:
        d, r = self.d, float(self.r)
        cells = r * self.cells_per_unit
        m = int(round(cells))
        if self.datum.kind == "affine":
            if abs(cells - m) > 1e-9:
                raise ValueError(f"r={r} is not a multiple of 1/{self.cells_per_unit}")
            h = 1.0 / self.cells_per_unit
            return Grid.cube(d, m + 1, h, self.center)
        if m % 2 == 0:
            m += 1
        return Grid.cube(d, m + 1, r / m, self.center, self.datum.nu)

    def lattice_datum(self) -> BoundaryDatum:
        if self.datum.kind == "affine":
            return self.datum
        return BoundaryDatum.jump(self.center, self.datum.zeta, self.datum.nu)

    def effective_pair(self) -> IntegrandPair:
        return recession_pair(self.pair) if self.use_recession_pair else self.pair


def solve_cell(cp: CellProblem, opts: SolveOptions | None = None) -> SolveResult:
    grid = cp.grid()
    if grid.r / grid.h < 8 - 1e-9:
        raise ValueError(f"need r/h >= 8, got {grid.r / grid.h}")
    return minimize(cp.effective_pair(), grid, cp.lattice_datum(), opts)


def cell_value(cp: CellProblem, opts: SolveOptions | None = None) -> float:
    return solve_cell(cp, opts).energy


@dataclass
class ConvergenceRecord:
    kind: str
    target: dict
    r_values: list
    h_values: list
    normalized_values: list
    wall_time_ms: list
    extrapolated: float
    plateau_flag: bool
    plateau_tol: float = 0.01
    pair: str = ""
    results: list = field(default_factory=list, repr=False)

    def rows(self) -> list:
        return [[r, h, v, t] for r, h, v, t in
                zip(self.r_values, self.h_values, self.normalized_values, self.wall_time_ms)]

    def to_csv(self, path) -> None:
        write_csv(path, ["r", "h", "normalized_value", "wall_time_ms"], self.rows())

    def to_json(self) -> dict:
        return {"kind": self.kind, "pair": self.pair, "target": self.target,
                "r_values": self.r_values, "h_values": self.h_values,
                "normalized_values": self.normalized_values, "wall_time_ms": self.wall_time_ms,
                "extrapolated": self.extrapolated, "plateau_flag": self.plateau_flag,
                "plateau_tol": self.plateau_tol}

    def to_svg(self) -> str:
        xs = [1.0 / r for r in self.r_values]
        label = "m / r^d" if self.kind == "bulk" else "m / r^(d-1)"
        return svg_lines({self.pair or self.kind: (xs, self.normalized_values)}, "1/r", label,
                         f"{self.kind} cell values")


def plateau(values, tol: float) -> bool:
    if len(values) < 3:
        return False
    last = np.asarray(values[-3:], dtype=float)
    scale = np.min(np.abs(last))
    return bool(np.ptp(last) <= tol * scale) if scale > 0 else bool(np.ptp(last) == 0)


def _record(kind, target, pair_name, rs, results, norms, plateau_tol) -> ConvergenceRecord:
    vals = [res.energy / nrm for res, nrm in zip(results, norms)]
    return ConvergenceRecord(
        kind=kind, target=target, r_values=[float(r) for r in rs],
        h_values=[res.field.grid.h for res in results], normalized_values=vals,
        wall_time_ms=[res.wall_time_ms for res in results], extrapolated=vals[-1],
        plateau_flag=plateau(vals, plateau_tol), plateau_tol=plateau_tol, pair=pair_name,
        results=results)


def _check_schedule(r_schedule):
    rs = [float(r) for r in r_schedule]
    if len(rs) < 3 or any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_schedule must be increasing with at least 3 entries")
    return rs


def estimate_f_lim(pair: IntegrandPair, A, r_schedule=(4, 8, 16, 32), x_anchor=None,
                   opts: SolveOptions | None = None, cells_per_unit: int = 8,
                   plateau_tol: float = 0.01, workers: int = 1) -> ConvergenceRecord:
    """Normalized bulk cell values m(l_A, Q(r x, r)) / r^d along r_schedule."""
    rs = _check_schedule(r_schedule)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    datum = BoundaryDatum.affine(A)
    d = datum.d

    def one(r):
        return solve_cell(CellProblem(pair, datum, r, x_anchor, False, cells_per_unit), opts)

    results = _map(one, rs, workers)
    return _record("bulk", {"A": A.tolist()}, pair.name, rs, results, [r ** d for r in rs],
                   plateau_tol)


def estimate_g_lim(pair: IntegrandPair, zeta, nu, r_schedule=(4, 8, 16, 32), x_anchor=None,
                   opts: SolveOptions | None = None, cells_per_unit: int = 8,
                   plateau_tol: float = 0.01, workers: int = 1) -> ConvergenceRecord:
    """Normalized surface values m^{F^inf}(u_{rx,zeta,nu}, Q_nu(r x, r)) / r^(d-1).

    (zeta, nu) and (-zeta, -nu) describe the same cell problem (same cube, datum
    differing by a constant), so the canonical representative is solved.
    """
    rs = _check_schedule(r_schedule)
    zc, nc = canonical_jump(zeta, nu)
    datum = BoundaryDatum.jump(np.zeros(nc.size), zc, nc)
    d = datum.d

    def one(r):
        return solve_cell(CellProblem(pair, datum, r, x_anchor, True, cells_per_unit), opts)

    results = _map(one, rs, workers)
    target = {"zeta": np.asarray(zeta, float).tolist(), "nu": np.asarray(nu, float).tolist()}
    return _record("surface", target, pair.name, rs, results, [r ** (d - 1) for r in rs],
                   plateau_tol)


def record_bound_violations(rec: ConvergenceRecord, pair: IntegrandPair) -> list:
    """Values outside the (f2)/(g3) bounds; the surface band is 5 h / r * c3 |zeta|."""
    c = pair.consts
    bad = []
    if rec.kind == "bulk":
        nA = float(frob(np.asarray(rec.target["A"])))
        lo, hi = c.c1 * nA - c.c2, c.c3 * nA + c.c4
        for r, v in zip(rec.r_values, rec.normalized_values):
            if not (lo - 1e-12 * abs(lo) <= v <= hi * (1 + 1e-12) + 1e-15):
                bad.append({"r": r, "value": v, "bounds": [lo, hi]})
    else:
        z = np.asarray(rec.target["zeta"])
        zn = float(frob(sym_tensor(z, np.asarray(rec.target["nu"]))))
        for r, h, v in zip(rec.r_values, rec.h_values, rec.normalized_values):
            band = 5 * h / r * c.c3 * float(np.linalg.norm(z))
            lo, hi = c.c1 * zn - band, c.c3 * zn + band
            if not (lo <= v <= hi):
                bad.append({"r": r, "value": v, "bounds": [lo, hi]})
    return bad


# --- exact identities ---------------------------------------------------------------

def _periodic_commensurate(pair: IntegrandPair, h: float) -> bool:
    if pair.f.periodicity not in ("periodic", "stationary_random"):
        return True
    k = 1.0 / h
    return abs(k - round(k)) < 1e-9


def check_scaling_identity(pair: IntegrandPair, A, eps: float, x=None, rho: float = 1.0,
                           n_cells: int | None = None, opts: SolveOptions | None = None) -> dict:
    """Both sides of m^{F_eps}(l_A, Q(x, rho)) = eps^d m^F(l_A, Q(x/eps, rho/eps)).

    The left lattice has spacing rho / n_cells and the right one eps times
    coarser in physical units, i.e. nodes correspond through v(z) = u(eps z)/eps.
    """
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    if n_cells is None:
        n_cells = int(round(8 * rho / eps))
    hL = rho / n_cells
    hR = hL / eps
    if not _periodic_commensurate(pair, hR):
        raise ValueError(f"right lattice spacing {hR} is not commensurate with the unit period")
    datum = BoundaryDatum.affine(A)
    gL = Grid.cube(d, n_cells + 1, hL, x)
    gR = Grid.cube(d, n_cells + 1, hR, x / eps)
    resL = minimize(rescale_pair(pair, eps), gL, datum, opts)
    resR = minimize(pair, gR, datum, opts)
    lhs = resL.energy
    rhs = eps ** d * resR.energy
    # transfer the left minimizer through the correspondence and re-evaluate
    v = DisplacementField(gR, resL.field.values / eps, datum)
    transfer = eps ** d * assemble_energy(v, pair)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return {"eps": eps, "rho": rho, "n_cells": n_cells, "lhs": lhs, "rhs": rhs,
            "rel_gap": abs(lhs - rhs) / scale, "transfer_rel_gap": abs(transfer - lhs) / scale,
            "h_left": hL, "h_right": hR}


def surface_scaling_constant(pair: IntegrandPair, zeta) -> float:
    c = pair.consts
    a = c.alpha
    z = float(np.linalg.norm(zeta))
    C1 = 2 * c.c3 * c.c7 / c.c1
    C2 = 2 * c.c6 + 2 * c.c6 * (2 * c.c6 * (1 - a)) ** ((1 - a) / a)
    return max(c.c6, c.c6 * c.c3 * z, C1 * c.c3 * z, c.c6 * (2 * c.c3 * z + C2) ** (1 - a))


def check_surface_scaling(pair: IntegrandPair, zeta, nu, eps: float, x=None, rho: float = 1.0,
                          n_cells: int = 17, opts: SolveOptions | None = None) -> dict:
    """|m^{F_eps}(u_{x,zeta,nu}, Q_nu(x, rho)) - eps^(d-1) m^{F^inf}(u_{x/eps,..}, Q_nu(x/eps, rho/eps))|
    against C rho^(d-1+alpha) + C eps rho^(d-1).

    Both lattices carry n_cells cells per side (odd), related by v(z) = u(eps z).
    """
    c = pair.consts
    if c.c6 > 0 and not eps < 1 / (2 * c.c6):
        raise ValueError(f"need eps < 1/(2 c6) = {1 / (2 * c.c6)}")
    if n_cells % 2 == 0:
        raise ValueError("n_cells must be odd so that no node lies on the jump plane")
    zeta = np.asarray(zeta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    d = nu.size
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    hL = rho / n_cells
    hR = hL / eps
    gL = Grid.cube(d, n_cells + 1, hL, x, nu)
    gR = Grid.cube(d, n_cells + 1, hR, x / eps, nu)
    resL = minimize(rescale_pair(pair, eps), gL, BoundaryDatum.jump(x, zeta, nu), opts)
    resR = minimize(recession_pair(pair), gR, BoundaryDatum.jump(x / eps, zeta, nu), opts)
    lhs = resL.energy
    rhs = eps ** (d - 1) * resR.energy
    C = surface_scaling_constant(pair, zeta)
    bound = C * rho ** (d - 1 + c.alpha) + C * eps * rho ** (d - 1)
    diff = abs(lhs - rhs)
    return {"eps": eps, "rho": rho, "n_cells": n_cells, "lhs": lhs, "rhs": rhs,
            "difference": diff, "C": C, "bound": bound, "holds": bool(diff <= bound),
            "margin": bound - diff}


def positively_homogeneous(pair: IntegrandPair) -> bool:
    return (pair.radial and pair.f.profile.name.startswith("linear")
            and pair.g.profile.name.startswith("linear"))


def f_inf_lim_estimate(pair: IntegrandPair, B, r_schedule=(4, 8, 16), t_grid=(1, 2, 4, 8),
                       opts: SolveOptions | None = None, cells_per_unit: int = 8,
                       workers: int = 1) -> dict:
    """Recession of the f_lim estimate along t B.

    Uses f_lim(tB)/t at t in t_grid with the model v(t) = L + C t^(-alpha) fitted
    on the two largest t.  For 1-homogeneous pairs the lattice minimand scales
    exactly with the datum, so v(t) is constant and a single t suffices.
    """
    B = sym_matrix(B)
    if float(frob(B)) == 0.0:
        return {"value": 0.0, "t": [], "values": [], "exact_homogeneity": True}
    homog = positively_homogeneous(pair)
    ts = [t_grid[0]] if homog else list(t_grid)
    vals = []
    for t in ts:
        rec = estimate_f_lim(pair, t * B, r_schedule, None, opts, cells_per_unit, workers=workers)
        vals.append(rec.extrapolated / t)
    if homog or len(ts) < 2:
        L = vals[-1]
    else:
        a = pair.consts.alpha
        t1, t2 = ts[-2], ts[-1]
        C = (vals[-2] - vals[-1]) / (t1 ** -a - t2 ** -a)
        L = vals[-1] - C * t2 ** -a
    return {"value": float(L), "t": [float(t) for t in ts], "values": vals,
            "exact_homogeneity": homog}


def check_gj_identity(pair: IntegrandPair, samples, r_schedule=(4, 8, 16), t_grid=(1, 2, 4, 8),
                      opts: SolveOptions | None = None, cells_per_unit: int = 8,
                      workers: int = 1) -> dict:
    """Compare g_lim(zeta, nu) with f^inf_lim(zeta (.) nu) on each sample."""
    rows = []
    for zeta, nu in samples:
        zeta = np.asarray(zeta, dtype=float)
        nu = np.asarray(nu, dtype=float)
        B = sym_tensor(zeta, nu)
        if float(frob(B)) == 0.0:
            rows.append({"zeta": zeta.tolist(), "nu": nu.tolist(), "g_lim": 0.0,
                         "f_inf_lim": 0.0, "rel_gap": 0.0})
            continue
        grec = estimate_g_lim(pair, zeta, nu, r_schedule, None, opts, cells_per_unit,
                              workers=workers)
        fin = f_inf_lim_estimate(pair, B, r_schedule, t_grid, opts, cells_per_unit, workers)
        gl, fl = grec.extrapolated, fin["value"]
        rows.append({"zeta": zeta.tolist(), "nu": nu.tolist(), "g_lim": gl, "f_inf_lim": fl,
                     "rel_gap": abs(gl - fl) / max(abs(gl), abs(fl)),
                     "g_record": grec.to_json(), "f_inf_detail": fin})
    return {"pair": pair.name, "samples": rows,
            "max_rel_gap": max((r["rel_gap"] for r in rows), default=0.0)}


def gamma_minima_check(pair: IntegrandPair, eps_schedule, U=(None, 1.0),
                       datum: BoundaryDatum | None = None, opts: SolveOptions | None = None,
                       cells_per_period: int = 8, limit_r_schedule=None,
                       workers: int = 1) -> dict:
    """Minima of F_eps on the cube U = Q(center, side) against the limit minimum.

    The limit integrands are x-independent and the limit energy of the datum on
    a cube is the cell value itself, so the limit minimum is f_lim(A) |U| for
    affine data and g_lim(zeta, nu) side^(d-1) for a jump through the center.
    Those limit values come from cell records extending to r = 2 / min(eps).
    """
    eps_list = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_schedule must be decreasing")
    center, side = U
    datum = datum or BoundaryDatum.affine(np.diag([1.0] + [0.0] * 1))
    d = datum.d
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    minima, walls = [], []

    def one(eps):
        pe = rescale_pair(pair, eps)
        h = eps / cells_per_period
        m = int(round(side / h))
        if abs(side / h - m) > 1e-9:
            raise ValueError(f"side {side} is not commensurate with h={h}")
        if datum.kind == "affine":
            grid = Grid.cube(d, m + 1, h, center)
            dat = datum
        else:
            m += (m + 1) % 2
            grid = Grid.cube(d, m + 1, side / m, center, datum.nu)
            dat = BoundaryDatum.jump(center, datum.zeta, datum.nu)
        return minimize(pe, grid, dat, opts)

    results = _map(one, eps_list, workers)
    minima = [res.energy for res in results]
    if limit_r_schedule is None:
        limit_r_schedule = sorted({1.0 / e for e in eps_list} | {2.0 / min(eps_list)})
        if len(limit_r_schedule) < 3:
            limit_r_schedule = [limit_r_schedule[-1] / 4, limit_r_schedule[-1] / 2,
                                limit_r_schedule[-1]]
    if datum.kind == "affine":
        rec = estimate_f_lim(pair, datum.A, limit_r_schedule, None, opts, cells_per_period,
                             workers=workers)
        limit = rec.extrapolated * side ** d
    else:
        rec = estimate_g_lim(pair, datum.zeta, datum.nu, limit_r_schedule, None, opts,
                             cells_per_period, workers=workers)
        limit = rec.extrapolated * side ** (d - 1)
    gaps = [abs(m - limit) / max(abs(limit), 1e-300) for m in minima]
    return {"eps": eps_list, "minima": minima, "limit_minimum": limit,
            "rel_gaps": gaps, "limit_record": rec.to_json(),
            "wall_time_ms": [res.wall_time_ms for res in results]}


def monotone_comparison(pair: IntegrandPair, A, r_inner: float, r_outer: float,
                        opts: SolveOptions | None = None, cells_per_unit: int = 8) -> dict:
    """m(Q_outer) <= m(Q_inner) + (c3 |A| + c4) (|Q_outer| - |Q_inner|) for nested cubes."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    datum = BoundaryDatum.affine(A)
    d = datum.d
    inner = cell_value(CellProblem(pair, datum, r_inner, None, False, cells_per_unit), opts)
    outer = cell_value(CellProblem(pair, datum, r_outer, None, False, cells_per_unit), opts)
    c = pair.consts
    extra = (c.c3 * float(frob(A)) + c.c4) * (r_outer ** d - r_inner ** d)
    tol = (opts or SolveOptions()).tol_energy
    return {"inner": inner, "outer": outer, "bound": inner + extra,
            "holds": bool(outer <= inner + extra + 2 * tol * max(outer, 1.0))}
