"""Minimization of the lattice energy under a frozen boundary shell.

Unknowns are the interior node displacements, written relative to the datum
and made dimensionless::

    u = u_datum + h * S_a * w,     J(w) = energy(u) / (volume * S_e)

with S_a the mean datum strain and S_e the datum energy density.  Strains are
assembled as ``E_datum + S_a * E_1(w)`` (unit-spacing operator), so problems
related by a power-of-two rescaling, a scaling of the datum, or an integer
translation follow bit-identical iterates.

Each GNC stage smooths the density (soft-min temperature ``beta * S_e``,
norm regularization ``beta * S_a``) and runs a limited-memory quasi-Newton
descent with Armijo backtracking.  The last stage (beta = 0) is followed by
multicolor coordinate sweeps with a scan + golden-section line search on every
node coordinate, which handles the kinks of the unsmoothed density.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .integrands import IntegrandPair, frob
from .lattice import (BoundaryDatum, CellDensity, DisplacementField, Grid, apply_datum,
                      assemble_energy, strain_from_jacobian, unit_jacobian, unit_jacobian_T)

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolveOptions:
    gnc_schedule: tuple = (1.0, 0.3, 0.1, 0.03, 0.0)
    max_sweeps: int = 500
    tol_energy: float = 1e-8
    multistart: int = 3
    seed: int = 0
    history: int = 8
    polish_sweeps: int = 4
    perturbation: float = 0.05
    # norm regularization levels run at zero temperature before the exact stage
    smoothing_tail: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

    def __post_init__(self):
        sched = tuple(float(b) for b in self.gnc_schedule)
        if not sched or sched[-1] != 0.0 or any(b < 0 for b in sched):
            raise ValueError("gnc_schedule must be nonempty, nonnegative and end at 0")
        if any(a < b for a, b in zip(sched, sched[1:])):
            raise ValueError("gnc_schedule must be decreasing")
        if not self.tol_energy > 0:
            raise ValueError("tol_energy must be positive")
        if self.multistart < 1 or self.max_sweeps < 1:
            raise ValueError("multistart and max_sweeps must be >= 1")
        object.__setattr__(self, "gnc_schedule", sched)
        tail = tuple(float(t) for t in self.smoothing_tail)
        if any(t <= 0 for t in tail) or any(a <= b for a, b in zip(tail, tail[1:])):
            raise ValueError("smoothing_tail must be positive and strictly decreasing")
        object.__setattr__(self, "smoothing_tail", tail)

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


@dataclass
class SolveResult:
    field: DisplacementField
    energy: float
    sweeps_used: int
    start_index: int
    certificate: str = "candidate_upper_bound"
    datum_energy: float = math.nan
    seed: int = 0
    wall_time_ms: float = 0.0
    stage_energies: list = field(default_factory=list)
    start_energies: list = field(default_factory=list)

    def to_json(self) -> dict:
        g = self.field.grid
        return {
            "energy": self.energy,
            "r": float(g.sides.max()),
            "h": g.h,
            "datum": self.field.datum.descriptor() if self.field.datum else None,
            "sweeps": self.sweeps_used,
            "seed": self.seed,
            "wall_time_ms": self.wall_time_ms,
            "start_index": self.start_index,
            "datum_energy": self.datum_energy,
            "certificate": self.certificate,
        }


class _Problem:
    """Dimensionless energy J(w) over the interior nodes."""

    def __init__(self, pair: IntegrandPair, grid: Grid, datum: BoundaryDatum):
        self.pair, self.grid, self.datum = pair, grid, datum
        self.d = grid.d
        self.datum_field = apply_datum(grid, datum)
        self.dens = CellDensity(pair, grid.cell_centers(), grid.h)
        self.n_cells = int(np.prod(grid.cells_shape))
        if datum.kind == "affine":
            Es = 0.5 * (datum.A + datum.A.T)
            self.E_d = np.broadcast_to(Es, (self.n_cells, self.d, self.d)).copy()
        else:
            D = unit_jacobian(self.datum_field.values) / grid.h
            self.E_d = strain_from_jacobian(D, grid.frame, grid.axis_aligned).reshape(-1, self.d, self.d)
        hd = grid.h ** grid.d
        self.hd = hd
        psi0 = self.dens.value(self.E_d)
        if not np.all(np.isfinite(psi0)):
            raise FloatingPointError("non-finite datum energy density; check the integrand")
        self.vol = hd * self.n_cells
        self.datum_energy_fast = hd * float(np.sum(psi0))
        S_a = float(np.mean(frob(self.E_d)))
        self.S_a = S_a if S_a > 0 else 1.0
        S_e = self.datum_energy_fast / self.vol
        self.S_e = S_e if S_e > 0 else max(self.pair.consts.c1 * self.S_a, 1e-300)
        self.inner_shape = tuple(s - 2 for s in grid.shape)
        self.n_var = int(np.prod(self.inner_shape)) * self.d

    # --- field <-> variables
    def full(self, w: np.ndarray) -> np.ndarray:
        W = np.zeros(self.grid.shape + (self.d,))
        W[self.grid.interior] = w.reshape(self.inner_shape + (self.d,))
        return W

    def strains(self, w: np.ndarray) -> np.ndarray:
        D = unit_jacobian(self.full(w))
        E = strain_from_jacobian(D, self.grid.frame, self.grid.axis_aligned)
        return self.E_d + self.S_a * E.reshape(-1, self.d, self.d)

    def to_field(self, w: np.ndarray) -> DisplacementField:
        vals = self.datum_field.values + (self.grid.h * self.S_a) * self.full(w)
        vals[self.grid.boundary_mask()] = self.datum_field.values[self.grid.boundary_mask()]
        return DisplacementField(self.grid, vals, self.datum)

    def from_field(self, values: np.ndarray) -> np.ndarray:
        W = (values - self.datum_field.values) / (self.grid.h * self.S_a)
        return W[self.grid.interior].ravel().copy()

    # --- objective
    def stage_params(self, beta: float, smoothing: float | None = None):
        smoothing = beta if smoothing is None else smoothing
        return beta * self.S_e, smoothing * self.S_a

    def J(self, w, beta, smoothing=None) -> float:
        T, delta = self.stage_params(beta, smoothing)
        psi = self.dens.value(self.strains(w), None, T, delta)
        return self.hd * float(np.sum(psi)) / (self.vol * self.S_e)

    def J_grad(self, w, beta, smoothing=None):
        T, delta = self.stage_params(beta, smoothing)
        E = self.strains(w)
        psi, S = self.dens.value_grad(E, T, delta, scale=self.S_a)
        norm = self.hd / (self.vol * self.S_e)
        J = norm * float(np.sum(psi))
        # d psi / d Dz = S R  (S symmetric, Dy = Dz R^T)
        P = S if self.grid.axis_aligned else S @ self.grid.frame
        P = P.reshape(self.grid.cells_shape + (self.d, self.d))
        G = unit_jacobian_T(P, self.grid.shape)
        grad = (norm * self.S_a) * G[self.grid.interior].ravel()
        return J, grad


def _lbfgs(fun, x0, max_iter: int, tol: float, m: int):
    """Limited-memory BFGS with Armijo backtracking; returns (x, f, energies)."""
    x = x0.copy()
    f, g = fun(x)
    energies = [f]
    S, Y, rho = [], [], []
    small = 0
    for _ in range(max_iter):
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        dvec = -q
        gd = g @ dvec
        if not gd < 0:
            S, Y, rho = [], [], []
            dvec = -g
            gd = -(g @ g)
            if gd == 0:
                break
        step = 1.0 if S else min(1.0, 1.0 / max(np.abs(g).max(), 1e-300))
        accepted = False
        for _ls in range(40):
            xn = x + step * dvec
            fn, gn = fun(xn)
            if fn <= f + 1e-4 * step * gd:
                accepted = True
                break
            # safeguarded quadratic interpolation
            denom = 2.0 * (fn - f - step * gd)
            new = -gd * step * step / denom if denom > 0 else 0.5 * step
            step = min(max(new, 0.1 * step), 0.5 * step)
        if not accepted:
            break
        s_, y_ = xn - x, gn - g
        sy = s_ @ y_
        if sy > 1e-12 * math.sqrt((s_ @ s_) * (y_ @ y_)):
            S.append(s_)
            Y.append(y_)
            rho.append(1.0 / sy)
            if len(S) > m:
                S.pop(0), Y.pop(0), rho.pop(0)
        rel = (f - fn) / max(abs(fn), 1e-300)
        x, f, g = xn, fn, gn
        energies.append(f)
        small = small + 1 if rel < tol else 0
        if small >= 3:
            break
    return x, f, energies


class _Sweeper:
    """Multicolor Gauss-Seidel over node coordinates with exact 1-D line searches.

    Nodes of equal index parity share no cell, so a whole color class is
    updated at once without changing the Gauss-Seidel result.
    """

    SCAN = np.concatenate([-np.geomspace(4.0, 1e-3, 7), [0.0], np.geomspace(1e-3, 4.0, 7)])

    def __init__(self, prob: _Problem):
        self.prob = prob
        g = prob.grid
        d = g.d
        cshape = g.cells_shape
        cell_id = np.arange(prob.n_cells).reshape(cshape)
        R = g.frame
        self.classes = []
        corners = list(itertools.product((0, 1), repeat=d))
        for color in itertools.product((0, 1), repeat=d):
            axes = [np.arange(1 + ((c + 1) % 2), s - 1, 2) for c, s in zip(color, g.shape)]
            if any(a.size == 0 for a in axes):
                continue
            idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
            # cells touching each node: node i sits at corner (1 - o) of cell i - (1 - o)
            cells, derivs = [], []
            for o in corners:
                cidx = idx - np.array([1 - c for c in o])
                cells.append(np.ravel_multi_index(tuple(cidx.T), cshape))
                sgn = np.array([(1.0 if (1 - c) else -1.0) for c in o]) / 2 ** (d - 1)
                derivs.append(sgn)
            flat = np.ravel_multi_index(tuple((idx - 1).T), prob.inner_shape)
            self.classes.append((flat, np.stack(cells, axis=1), np.stack(derivs, axis=0)))
        self.R = R

    def _dE(self, sgn_rows, k):
        """Strain derivative per unit change of coordinate k, for each corner row."""
        d = self.prob.d
        out = np.zeros((len(sgn_rows), d, d))
        for j, sg in enumerate(sgn_rows):
            Dz = np.zeros((d, d))
            Dz[k] = sg
            Dy = Dz @ self.R.T
            out[j] = 0.5 * (Dy + Dy.T)
        return self.prob.S_a * out

    def sweep(self, w: np.ndarray) -> np.ndarray:
        prob = self.prob
        d = prob.d
        W = w.reshape(-1, d)
        for flat, cells, sgn in self.classes:
            for k in range(d):
                E = prob.strains(W.ravel())
                E0 = E[cells]                                   # (P, 2^d, d, d)
                dE = self._dE(sgn, k)                           # (2^d, d, d)
                phi = lambda tau: prob.dens.value(
                    E0 + tau[:, None, None, None] * dE, cells).sum(axis=1)
                tau = self._line_search(phi, len(flat))
                W[flat, k] += tau
        return W.ravel()

    def _line_search(self, phi, P: int) -> np.ndarray:
        scan = self.SCAN
        vals = np.stack([phi(np.full(P, t)) for t in scan], axis=1)   # (P, S)
        base = vals[:, len(scan) // 2]
        j = np.argmin(vals, axis=1)
        lo = scan[np.maximum(j - 1, 0)]
        hi = scan[np.minimum(j + 1, len(scan) - 1)]
        a, b = lo.copy(), hi.copy()
        c = b - GOLDEN * (b - a)
        e = a + GOLDEN * (b - a)
        fc, fe = phi(c), phi(e)
        for _ in range(40):
            left = fc < fe
            b = np.where(left, e, b)
            a = np.where(left, a, c)
            e_new = np.where(left, c, a + GOLDEN * (b - a))
            c_new = np.where(left, b - GOLDEN * (b - a), e)
            fe_new = np.where(left, fc, np.nan)
            fc_new = np.where(left, np.nan, fe)
            need_c = left
            c, e = c_new, e_new
            fc = np.where(need_c, phi(c), fc_new)
            fe = np.where(need_c, fe_new, phi(e))
            if np.all(b - a < 1e-10 * np.maximum(1.0, np.abs(a))):
                break
        cand = np.stack([scan[j], c, e], axis=1)
        cval = np.stack([vals[np.arange(P), j], fc, fe], axis=1)
        best = np.argmin(cval, axis=1)
        tau = cand[np.arange(P), best]
        gain = base - cval[np.arange(P), best]
        return np.where(gain > 0, tau, 0.0)


def _starts(prob: _Problem, opts: SolveOptions, initial_fields) -> list:
    """(w0, warm) pairs; warm starts skip the continuation and only run the last stage."""
    starts = [(np.zeros(prob.n_var), False)]
    if opts.multistart >= 2:
        rng = np.random.default_rng([opts.seed, 1])
        starts.append((opts.perturbation * rng.standard_normal(prob.n_var), False))
    if opts.multistart >= 3:
        starts.append((prob.from_field(_seeded_interface(prob)), False))
    for k in range(3, opts.multistart):
        rng = np.random.default_rng([opts.seed, k])
        starts.append((4 * opts.perturbation * rng.standard_normal(prob.n_var), False))
    for u in initial_fields:
        vals = np.asarray(u.values if hasattr(u, "values") else u, dtype=float)
        starts.append((prob.from_field(vals), True))
    return starts


def _seeded_interface(prob: _Problem) -> np.ndarray:
    """Datum-compatible field with a sharp interface through the domain center.

    Jump data get a diffuse ramp instead, since the datum already carries the
    interface.
    """
    grid, datum = prob.grid, prob.datum
    y = grid.nodes()
    if datum.kind == "jump":
        s = (y - datum.x0) @ datum.nu
        width = 0.25 * float(grid.sides.min())
        ramp = np.clip(0.5 + s / width, 0.0, 1.0)
        vals = ramp[..., None] * datum.zeta
    else:
        A = datum.A
        Asym = 0.5 * (A + A.T)
        lam, vec = np.linalg.eigh(Asym)
        e = vec[:, np.argmax(np.abs(lam))]
        c = grid.center
        s = (y - c) @ e
        proj = (y - c) - s[..., None] * e
        half = 0.5 * float(grid.sides.min())
        vals = (c + proj) @ A.T + np.sign(s)[..., None] * (half * (A @ e))
    vals = np.where(grid.boundary_mask()[..., None], prob.datum_field.values, vals)
    return vals


def minimize(p: IntegrandPair, grid: Grid, datum: BoundaryDatum,
             opts: SolveOptions | None = None, initial_fields=()) -> SolveResult:
    """Best lattice competitor found over the multistarts (an upper bound for the minimum)."""
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    if grid.n_free == 0:
        raise ValueError("grid has no interior nodes")
    prob = _Problem(p, grid, datum)
    datum_energy = assemble_energy(prob.datum_field, p)
    best = (datum_energy, -1, prob.datum_field, [])
    sweeps = 0
    start_energies = []
    if datum_energy > 0:
        sweeper = None
        for k, (w, warm) in enumerate(_starts(prob, opts, initial_fields)):
            if warm:
                u0 = prob.to_field(w)
                e0 = assemble_energy(u0, p)
                if e0 < best[0]:
                    best = (e0, k, u0, [])
            stages = []
            for beta in ((0.0,) if warm else opts.gnc_schedule):
                if beta == 0.0 and not warm:
                    last = min((b for b in opts.gnc_schedule if b > 0), default=math.inf)
                    for sm in (t for t in opts.smoothing_tail if t < last):
                        w, _, tail_hist = _lbfgs(lambda v: prob.J_grad(v, 0.0, sm), w,
                                                 opts.max_sweeps, opts.tol_energy, opts.history)
                        sweeps += len(tail_hist) - 1
                w, Jw, hist = _lbfgs(lambda v: prob.J_grad(v, beta), w,
                                     opts.max_sweeps, opts.tol_energy, opts.history)
                sweeps += len(hist) - 1
                if beta == 0.0 and opts.polish_sweeps > 0:
                    sweeper = sweeper or _Sweeper(prob)
                    J_prev = Jw
                    for _ in range(opts.polish_sweeps):
                        w = sweeper.sweep(w)
                        Jn = prob.J(w, 0.0)
                        hist.append(Jn)
                        sweeps += 1
                        if (J_prev - Jn) <= opts.tol_energy * abs(Jn):
                            break
                        J_prev = Jn
                log.debug("start %d stage beta=%g: %d steps, J=%.12g", k, beta, len(hist) - 1, hist[-1])
                stages.append(hist)
            u = prob.to_field(w)
            e = assemble_energy(u, p)
            start_energies.append(e)
            log.debug("start %d: energy %.12g (datum %.12g)", k, e, datum_energy)
            if e < best[0]:
                best = (e, k, u, stages)
    energy, k, u, stages = best
    return SolveResult(u, energy, sweeps, k, datum_energy=datum_energy, seed=opts.seed,
                       wall_time_ms=1e3 * (time.perf_counter() - t0), stage_energies=stages,
                       start_energies=start_energies)


# --- brute force ------------------------------------------------------------------------

def quantization_gap(p: IntegrandPair, grid: Grid, quantization) -> float:
    """Energy change bound for rounding a minimizer to the quantization grid.

    Each free coordinate moves by at most half the largest grid gap; each cell
    strain then moves by at most the sum of its corner contributions, and the
    density is Lipschitz with constant max(c5, c3, sigma1).
    """
    q = np.sort(np.asarray(quantization, dtype=float))
    half = 0.5 * float(np.max(np.diff(q))) if q.size > 1 else 0.0
    c = p.consts
    lip = max(c.c5, c.c3, c.sigma1)
    d = grid.d
    free = np.zeros(grid.shape, dtype=bool)
    free[grid.interior] = True
    total = 0.0
    for corner in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(o, s - 1 + o) for o, s in zip(corner, grid.shape))
        # a free corner moves each of its d components by <= half; the
        # corresponding Jacobian row entries move by half / 2^(d-1) / h per direction
        total += free[sl].sum() * half * math.sqrt(d) * math.sqrt(d) / 2 ** (d - 1) / grid.h
    return lip * grid.h ** d * total


def brute_force_min(p: IntegrandPair, grid: Grid, datum: BoundaryDatum, quantization,
                    chunk: int = 20000) -> float:
    """Exact minimum over fields whose free coordinates are datum + quantization offsets."""
    q = np.asarray(quantization, dtype=float).ravel()
    if q.size > 9:
        raise ValueError("at most 9 quantization values per component")
    n_free = grid.n_free
    if n_free > 6:
        raise ValueError("brute force supports at most 6 free nodes")
    base = apply_datum(grid, datum)
    if n_free == 0:
        return assemble_energy(base, p)
    n_coord = n_free * grid.d
    n_states = q.size ** n_coord
    if n_states > 1e8:
        raise ValueError(f"search space of {n_states} states exceeds 1e8")
    dens = CellDensity(p, grid.cell_centers(), grid.h)
    hd = grid.h ** grid.d
    interior = grid.interior
    best = math.inf
    digits = q.size ** np.arange(n_coord)[::-1]
    for start in range(0, n_states, chunk):
        ids = np.arange(start, min(start + chunk, n_states))
        choice = (ids[:, None] // digits) % q.size
        V = np.broadcast_to(base.values, (ids.size,) + base.values.shape).copy()
        offs = q[choice].reshape((ids.size,) + tuple(s - 2 for s in grid.shape) + (grid.d,))
        V[(slice(None),) + interior] += offs
        D = unit_jacobian(V) / grid.h
        E = strain_from_jacobian(D, grid.frame, grid.axis_aligned)
        E = E.reshape(ids.size, -1, grid.d, grid.d)
        psi = np.stack([dens.value(E[i]) for i in range(ids.size)]) if not p.radial else \
            dens.value(E.reshape(-1, grid.d, grid.d), np.tile(np.arange(E.shape[1]), ids.size)).reshape(ids.size, -1)
        energies = hd * psi.sum(axis=1)
        best = min(best, float(energies.min()))
    return best
