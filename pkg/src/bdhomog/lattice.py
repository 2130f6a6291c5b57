"""Lattice discretization of displacement fields on (rotated) cubes and rectangles.

Nodes sit at ``center + frame @ z`` with local coordinates
``z_k = (i_k - (n_k - 1)/2) * h``.  Each cell carries the symmetric part of the
Q1 cell-average Jacobian; its density is the per-cell competition

    psi_h(x, A) = min(f(x, A), g_hat(x, h A) / h)

between a diffuse (bulk) and a concentrated (surface) explanation of the
strain, where ``g_hat(x, B)`` is the cheapest jump with ``zeta (.) nu = B`` and
falls back to ``f^inf(x, B)`` when ``B`` has no such decomposition.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .integrands import IntegrandPair, decomposable, frob, sym_matrix, sym_tensor

Array = np.ndarray


def rotation_frame(nu) -> Array:
    """Orthonormal R with R e_d = nu (and det +1 for d >= 2); R_{-nu} maps cubes like R_nu."""
    nu = np.asarray(nu, dtype=float)
    d = nu.size
    norm = np.linalg.norm(nu)
    if not np.isclose(norm, 1.0, rtol=0, atol=1e-12):
        raise ValueError(f"normal must be a unit vector, |nu| = {norm}")
    if d == 1:
        return nu.reshape(1, 1).copy()
    if d == 2:
        return np.array([[nu[1], nu[0]], [-nu[0], nu[1]]])
    e3 = np.array([0.0, 0.0, 1.0])
    c = float(nu @ e3)
    if c < -1 + 1e-14:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(e3, nu)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K / (1 + c)


@dataclass(frozen=True, eq=False)
class Grid:
    d: int
    shape: tuple
    h: float
    frame: Array
    center: Array

    def __post_init__(self):
        if len(self.shape) != self.d or min(self.shape) < 2:
            raise ValueError(f"bad grid shape {self.shape} for d={self.d}")
        if not self.h > 0:
            raise ValueError("spacing must be positive")
        R = np.asarray(self.frame, dtype=float)
        if R.shape != (self.d, self.d) or not np.allclose(R.T @ R, np.eye(self.d), atol=1e-12):
            raise ValueError("frame must be orthonormal")
        object.__setattr__(self, "frame", R)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(self.d))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @classmethod
    def cube(cls, d: int, n: int, h: float, center=None, nu=None) -> "Grid":
        frame = np.eye(d) if nu is None else rotation_frame(nu)
        return cls(d, (n,) * d, h, frame, np.zeros(d) if center is None else center)

    @classmethod
    def box(cls, lower, upper, h: float) -> "Grid":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        cells = (upper - lower) / h
        n_cells = np.rint(cells).astype(int)
        if np.any(np.abs(cells - n_cells) > 1e-9) or np.any(n_cells < 1):
            raise ValueError(f"box {lower}..{upper} is not commensurate with h={h}")
        return cls(lower.size, tuple(n_cells + 1), h, np.eye(lower.size), 0.5 * (lower + upper))

    @property
    def n(self) -> int:
        if len(set(self.shape)) != 1:
            raise ValueError("grid is not a cube")
        return self.shape[0]

    @property
    def cells_shape(self) -> tuple:
        return tuple(s - 1 for s in self.shape)

    @property
    def sides(self) -> Array:
        return np.array([(s - 1) * self.h for s in self.shape])

    @property
    def r(self) -> float:
        return (self.n - 1) * self.h

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def axis_aligned(self) -> bool:
        return bool(np.array_equal(self.frame, np.eye(self.d)))

    def _local_axes(self, offset: float) -> list:
        return [(np.arange(s - (1 if offset else 0)) + offset - (s - 1) / 2) * self.h
                for s in self.shape]

    def _points(self, offset: float) -> Array:
        z = np.stack(np.meshgrid(*self._local_axes(offset), indexing="ij"), axis=-1)
        if self.axis_aligned:
            return self.center + z
        return self.center + z @ self.frame.T

    def local_nodes(self) -> Array:
        return np.stack(np.meshgrid(*self._local_axes(0.0), indexing="ij"), axis=-1)

    def nodes(self) -> Array:
        return self._points(0.0)

    def cell_centers(self) -> Array:
        return self._points(0.5)

    def boundary_mask(self) -> Array:
        mask = np.zeros(self.shape, dtype=bool)
        for k, s in enumerate(self.shape):
            idx = [slice(None)] * self.d
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = s - 1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior(self) -> tuple:
        return tuple(slice(1, s - 1) for s in self.shape)

    @property
    def n_free(self) -> int:
        return int(np.prod([max(s - 2, 0) for s in self.shape]))

    def descriptor(self) -> dict:
        return {"d": self.d, "shape": list(self.shape), "h": self.h,
                "frame": self.frame.tolist(), "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class BoundaryDatum:
    """Affine datum y -> A y, or elementary jump u_{x0, zeta, nu}."""

    kind: str
    A: Array | None = None
    x0: Array | None = None
    zeta: Array | None = None
    nu: Array | None = None

    @classmethod
    def affine(cls, A) -> "BoundaryDatum":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("affine datum needs a square matrix")
        return cls("affine", A=A)

    @classmethod
    def jump(cls, x0, zeta, nu) -> "BoundaryDatum":
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        if not np.isclose(np.linalg.norm(nu), 1.0, rtol=0, atol=1e-12):
            raise ValueError("jump normal must be a unit vector")
        return cls("jump", x0=np.atleast_1d(np.asarray(x0, dtype=float)),
                   zeta=np.atleast_1d(np.asarray(zeta, dtype=float)), nu=nu)

    @property
    def d(self) -> int:
        return self.A.shape[0] if self.kind == "affine" else self.nu.size

    def __call__(self, y) -> Array:
        y = np.asarray(y, dtype=float)
        if self.kind == "affine":
            return y @ self.A.T
        side = (y - self.x0) @ self.nu > 0
        return np.where(side[..., None], self.zeta, 0.0)

    def scaled(self, t: float) -> "BoundaryDatum":
        if self.kind == "affine":
            return BoundaryDatum.affine(t * self.A)
        return BoundaryDatum.jump(self.x0, t * self.zeta, self.nu)

    def descriptor(self) -> dict:
        if self.kind == "affine":
            return {"kind": "affine", "A": self.A.tolist()}
        return {"kind": "jump", "x0": self.x0.tolist(), "zeta": self.zeta.tolist(),
                "nu": self.nu.tolist()}


@dataclass(eq=False)
class DisplacementField:
    grid: Grid
    values: Array
    datum: BoundaryDatum | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape + (self.grid.d,):
            raise ValueError(f"values shape {self.values.shape} does not match grid")

    def check_datum(self) -> None:
        if self.datum is None:
            return
        mask = self.grid.boundary_mask()
        ref = self.datum(self.grid.nodes())
        if not np.array_equal(self.values[mask], ref[mask]):
            raise RuntimeError("boundary datum violated on the frozen shell")

    def copy(self) -> "DisplacementField":
        return DisplacementField(self.grid, self.values.copy(), self.datum)


def apply_datum(grid: Grid, datum: BoundaryDatum) -> DisplacementField:
    if datum.d != grid.d:
        raise ValueError(f"datum dimension {datum.d} != grid dimension {grid.d}")
    vals = datum(grid.nodes())
    if not np.all(np.isfinite(vals)):
        raise ValueError("datum is not finite on the grid")
    return DisplacementField(grid, vals, datum)


# --- discrete strain ----------------------------------------------------------------

def _corners(d):
    return list(itertools.product((0, 1), repeat=d))


def _corner_slice(shape, corner):
    return tuple(slice(c, s - 1 + c) for c, s in zip(corner, shape))


def unit_jacobian(W: Array) -> Array:
    """Cell-average forward-difference Jacobian at unit spacing.

    W has shape (n_1, .., n_d, d) (optionally with leading batch axes); the
    result has shape (cells..., d, d) with entry [a, b] = d W_a / d z_b.
    """
    d = W.shape[-1]
    grid_shape = W.shape[-1 - d:-1]
    lead = W.shape[:-1 - d]
    pre = (slice(None),) * len(lead)
    if d == 1:
        D = W[pre + (slice(1, None),)] - W[pre + (slice(None, -1),)]
        return D[..., None]
    if d == 2:
        t1 = W[pre + (slice(1, None), slice(1, None))] - W[pre + (slice(None, -1), slice(None, -1))]
        t2 = W[pre + (slice(1, None), slice(None, -1))] - W[pre + (slice(None, -1), slice(1, None))]
        return np.stack([0.5 * (t1 + t2), 0.5 * (t1 - t2)], axis=-1)
    D = np.zeros(lead + tuple(s - 1 for s in grid_shape) + (d, d))
    scale = 1.0 / 2 ** (d - 1)
    for corner in _corners(d):
        Wc = W[pre + _corner_slice(grid_shape, corner)]
        for b in range(d):
            D[..., b] += (1.0 if corner[b] else -1.0) * scale * Wc
    return D


def unit_jacobian_T(P: Array, grid_shape: tuple) -> Array:
    """Adjoint of unit_jacobian: maps (cells..., d, d) back to (nodes..., d)."""
    d = len(grid_shape)
    G = np.zeros(tuple(grid_shape) + (d,))
    if d == 1:
        q = P[..., 0]
        G[1:] += q
        G[:-1] -= q
        return G
    if d == 2:
        px, py = P[..., 0], P[..., 1]
        q1 = 0.5 * (px + py)
        q2 = 0.5 * (px - py)
        G[1:, 1:] += q1
        G[:-1, :-1] -= q1
        G[1:, :-1] += q2
        G[:-1, 1:] -= q2
        return G
    scale = 1.0 / 2 ** (d - 1)
    for corner in _corners(d):
        acc = np.zeros(P.shape[:-1])
        for b in range(d):
            acc += (1.0 if corner[b] else -1.0) * scale * P[..., b]
        G[_corner_slice(grid_shape, corner)] += acc
    return G


def strain_from_jacobian(Dz: Array, frame: Array, axis_aligned: bool) -> Array:
    """Symmetric part of Dz R^T (the Jacobian in physical coordinates)."""
    Dy = Dz if axis_aligned else Dz @ frame.T
    return 0.5 * (Dy + np.swapaxes(Dy, -1, -2))


def cell_strains(u: DisplacementField) -> Array:
    g = u.grid
    return strain_from_jacobian(unit_jacobian(u.values) / g.h, g.frame, g.axis_aligned)


def discrete_sym_gradient(u: DisplacementField, cell_index) -> Array:
    idx = tuple(int(i) for i in np.atleast_1d(cell_index))
    cs = u.grid.cells_shape
    if len(idx) != u.grid.d or any(not (0 <= i < s) for i, s in zip(idx, cs)):
        raise IndexError(f"cell index {idx} outside cells {cs}")
    sl = tuple(slice(i, i + 2) for i in idx) + (slice(None),)
    D = unit_jacobian(u.values[sl]) / u.grid.h
    E = strain_from_jacobian(D, u.grid.frame, u.grid.axis_aligned)
    return E[(0,) * u.grid.d]


# --- densities ----------------------------------------------------------------------

def softmin(a: Array, b: Array, T: float) -> tuple[Array, Array]:
    """-T log(exp(-a/T) + exp(-b/T)) and the weight it puts on a; hard min at T = 0."""
    if T <= 0:
        return np.minimum(a, b), (a <= b).astype(float)
    diff = a - b
    val = np.minimum(a, b) - T * np.log1p(np.exp(-np.abs(diff) / T))
    return val, expit(-diff / T)


def norm_and_decomposable(E: Array) -> tuple[Array, Array]:
    """Frobenius norm and rank-one decomposability, unrolled for d <= 2."""
    d = E.shape[-1]
    if d == 1:
        n = np.abs(E[..., 0, 0])
        return n, np.ones(n.shape, dtype=bool)
    if d == 2:
        a, b, c = E[..., 0, 0], E[..., 1, 1], E[..., 0, 1]
        c2 = c * E[..., 1, 0]
        n2 = a * a + b * b + c * c + E[..., 1, 0] ** 2
        return np.sqrt(n2), a * b - c2 <= 1e-9 * n2
    return frob(E), decomposable(E)


def _smoothed_norm(n: Array, delta: float):
    if delta <= 0:
        return n, np.ones_like(n)
    q = np.sqrt(n * n + delta * delta)
    return n * n / (q + delta), n / q


class CellDensity:
    """Per-cell density psi_h with optional GNC smoothing, evaluated on flattened cells.

    Smoothing replaces |A| by sqrt(|A|^2 + delta^2) - delta and the hard min
    by a soft-min at temperature T.
    """

    def __init__(self, pair: IntegrandPair, x_cells: Array, h: float):
        self.pair = pair
        self.x = np.asarray(x_cells, dtype=float).reshape(-1, x_cells.shape[-1])
        self.h = float(h)
        self.radial = pair.radial
        if self.radial:
            self.a = np.asarray(pair.f.weight(self.x), dtype=float)
            self.th = np.asarray(pair.g.weight(self.x), dtype=float)
            self.fp = pair.f.profile
            self.gp = pair.g.profile

    def _radial(self, E, idx, T, delta, grad):
        a = self.a if idx is None else self.a[idx]
        th = self.th if idx is None else self.th[idx]
        n, dec = norm_and_decomposable(E)
        m, dm = _smoothed_norm(n, delta)
        h = self.h
        bulk = a * self.fp.value(m)
        rec = a * self.fp.slope_inf
        surf = np.where(dec, th * self.gp.value(h * m) / h, rec * m)
        psi, wb = softmin(bulk, surf, T)
        if not grad:
            return psi, None
        dpsi = (wb * a * self.fp.deriv(m)
                + (1.0 - wb) * np.where(dec, th * self.gp.deriv(h * m), rec)) * dm
        coef = np.where(n > 0, dpsi / np.where(n > 0, n, 1.0), 0.0)
        return psi, coef[..., None, None] * E

    def _generic(self, E, idx, T, delta):
        x = self.x if idx is None else self.x[idx]
        n = frob(E)
        if delta > 0:
            m, _ = _smoothed_norm(n, delta)
            E = E * np.where(n > 0, m / np.where(n > 0, n, 1.0), 0.0)[..., None, None]
        f = self.pair.f
        h = self.h
        bulk = f(x, E)
        hat, dec = self.pair.g.hat(x, h * E)
        surf = np.where(dec, np.nan_to_num(hat) / h, f.recession_eval(x, E))
        psi, _ = softmin(bulk, surf, T)
        return psi

    def value(self, E: Array, idx=None, T: float = 0.0, delta: float = 0.0) -> Array:
        if self.radial:
            return self._radial(E, idx, T, delta, False)[0]
        return self._generic(E, idx, T, delta)

    def value_grad(self, E: Array, T: float = 0.0, delta: float = 0.0, scale: float = 1.0):
        """Density and its derivative S with d psi = sum_ab S_ab dE_ab."""
        if self.radial:
            return self._radial(E, None, T, delta, True)
        psi = self._generic(E, None, T, delta)
        d = E.shape[-1]
        S = np.zeros_like(E)
        eta = 1e-6 * np.maximum(frob(E), scale)[..., None, None]
        for a_ in range(d):
            for b_ in range(a_, d):
                P = np.zeros((d, d))
                P[a_, b_] = P[b_, a_] = 1.0
                step = eta * P
                diff = (self._generic(E + step, None, T, delta)
                        - self._generic(E - step, None, T, delta)) / (2 * eta[..., 0, 0])
                if a_ == b_:
                    S[..., a_, a_] = diff
                else:
                    S[..., a_, b_] = S[..., b_, a_] = 0.5 * diff
        return psi, S


def density(pair: IntegrandPair, x, A, h: float) -> Array:
    """psi_h(x, A) evaluated pointwise (no smoothing)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    A = np.asarray(A, dtype=float).reshape(-1, x.shape[-1], x.shape[-1])
    return CellDensity(pair, x, h).value(A)


def assemble_energy(u: DisplacementField, p: IntegrandPair) -> float:
    """Sum over cells of h^d * psi_h(x_c, E_h u(c)), reduced by a pairwise sum."""
    u.check_datum()
    g = u.grid
    E = cell_strains(u).reshape(-1, g.d, g.d)
    psi = CellDensity(p, g.cell_centers(), g.h).value(E)
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError("non-finite energy density")
    return float(g.h ** g.d * np.sum(np.ascontiguousarray(psi).ravel()))


def total_variation(u: DisplacementField) -> float:
    g = u.grid
    return float(g.h ** g.d * np.sum(frob(cell_strains(u))))


# --- serialization -------------------------------------------------------------------

def field_to_bytes(u: DisplacementField) -> bytes:
    """Little-endian layout: d, per-axis node counts (int64), h, frame, center, node vectors (float64)."""
    g = u.grid
    head = struct.pack("<q", g.d) + struct.pack(f"<{g.d}q", *g.shape)
    body = np.concatenate([[g.h], g.frame.ravel(), g.center]).astype("<f8").tobytes()
    return head + body + np.ascontiguousarray(u.values, dtype="<f8").tobytes()


def field_from_bytes(buf: bytes) -> DisplacementField:
    (d,) = struct.unpack_from("<q", buf, 0)
    shape = struct.unpack_from(f"<{d}q", buf, 8)
    off = 8 + 8 * d
    meta = np.frombuffer(buf, dtype="<f8", count=1 + d * d + d, offset=off)
    h, frame, center = meta[0], meta[1:1 + d * d].reshape(d, d), meta[1 + d * d:]
    off += 8 * meta.size
    vals = np.frombuffer(buf, dtype="<f8", offset=off).reshape(tuple(shape) + (d,))
    return DisplacementField(Grid(d, shape, float(h), frame.copy(), center.copy()), vals.copy())


def field_to_csv(u: DisplacementField, path) -> None:
    g = u.grid
    y = g.nodes().reshape(-1, g.d)
    v = u.values.reshape(-1, g.d)
    header = ",".join([f"y{k}" for k in range(g.d)] + [f"u{k}" for k in range(g.d)])
    np.savetxt(path, np.hstack([y, v]), delimiter=",", fmt="%.12e", header=header, comments="")
