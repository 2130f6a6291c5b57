"""Bulk and surface integrands with linear growth.

Integrands are vectorized: points ``x`` have shape ``(..., d)``, strains ``A``
have shape ``(..., d, d)``, jump amplitudes ``zeta`` and normals ``nu`` have
shape ``(..., d)``.  Every evaluation returns an array of shape ``(...)``.

Most library integrands are *radial*: ``f(x, A) = a(x) * phi(|A|)`` and
``g(x, zeta, nu) = theta(x) * chi(|zeta (.) nu|)``.  The lattice solver uses
that structure for analytic gradients; other integrands go through the generic
path with finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class StructuralConstants:
    c1: float = 1.0
    c2: float = 0.0
    c3: float = 1.0
    c4: float = 0.0
    c5: float = 1.0
    c6: float = 0.0
    c7: float = 0.0
    alpha: float = 0.5
    sigma1: float = 1.0

    def __post_init__(self):
        if not (0 < self.c1 <= self.c3):
            raise ValueError(f"need 0 < c1 <= c3, got c1={self.c1}, c3={self.c3}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name in ("c2", "c4", "c5", "c6", "c7", "sigma1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# --- symmetric matrices -----------------------------------------------------

def sym_matrix(entries) -> Array:
    """Symmetrize a (..., d, d) array so that entries[i, j] == entries[j, i] exactly."""
    a = np.asarray(entries, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] not in (1, 2, 3):
        raise ValueError(f"expected a (..., d, d) array with d in 1..3, got {a.shape}")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sym_tensor(a, b) -> Array:
    """Symmetrized tensor product a (.) b, batched over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    outer = a[..., :, None] * b[..., None, :]
    return 0.5 * (outer + np.swapaxes(outer, -1, -2))


def frob(A) -> Array:
    A = np.asarray(A, dtype=float)
    return np.sqrt(np.sum(A * A, axis=(-2, -1)))


# --- scalar profiles ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Profile:
    """Scalar profile t -> phi(t) for t >= 0, with derivative and slope at infinity."""

    name: str
    value: Callable[[Array], Array]
    deriv: Callable[[Array], Array]
    slope_inf: float
    kinks: tuple = ()

    def __call__(self, t):
        return self.value(np.asarray(t, dtype=float))

    def rescaled(self, eps: float) -> "Profile":
        # t -> eps * phi(t / eps)
        v, dv = self.value, self.deriv
        return Profile(
            f"{self.name}@{eps!r}",
            lambda t: eps * v(t / eps),
            lambda t: dv(t / eps),
            self.slope_inf,
            tuple(eps * k for k in self.kinks),
        )

    def recession(self) -> "Profile":
        return linear_profile(self.slope_inf)


def linear_profile(slope: float = 1.0) -> Profile:
    slope = float(slope)
    return Profile(
        f"linear({slope!r})",
        lambda t: slope * t,
        lambda t: np.full(np.shape(t), slope),
        slope,
    )


def smooth_profile() -> Profile:
    """sqrt(1 + t^2) - 1, written to avoid cancellation near 0."""
    def value(t):
        return t * t / (np.sqrt(1.0 + t * t) + 1.0)

    def deriv(t):
        return t / np.sqrt(1.0 + t * t)

    return Profile("smooth", value, deriv, 1.0)


def two_slope_profile(slope0: float, intercept: float, slope1: float) -> Profile:
    """min(slope0 * t, intercept + slope1 * t): concave, one kink."""
    kink = intercept / (slope0 - slope1) if slope0 > slope1 else math.inf

    def value(t):
        return np.minimum(slope0 * t, intercept + slope1 * t)

    def deriv(t):
        return np.where(slope0 * t <= intercept + slope1 * t, slope0, slope1)

    kinks = (kink,) if math.isfinite(kink) else ()
    return Profile(f"two_slope({slope0!r},{intercept!r},{slope1!r})", value, deriv,
                   min(slope0, slope1), kinks)


def constant_weight(c: float) -> Callable[[Array], Array]:
    c = float(c)
    return lambda x: np.full(np.shape(x)[:-1], c)


# --- integrands ---------------------------------------------------------------

PERIODICITIES = ("homogeneous", "periodic", "stationary_random", "heterogeneous")


@dataclass(frozen=True, eq=False)
class BulkIntegrand:
    eval: Callable[[Array, Array], Array]
    recession_eval: Callable[[Array, Array], Array]
    consts: StructuralConstants
    periodicity: str = "homogeneous"
    weight: Callable | None = None
    profile: Profile | None = None

    def __call__(self, x, A):
        return self.eval(np.asarray(x, dtype=float), np.asarray(A, dtype=float))

    @property
    def radial(self) -> bool:
        return self.weight is not None and self.profile is not None

    @classmethod
    def from_radial(cls, weight, profile: Profile, consts, periodicity="homogeneous"):
        rec = profile.recession()
        return cls(
            eval=lambda x, A: weight(x) * profile.value(frob(A)),
            recession_eval=lambda x, A: weight(x) * rec.value(frob(A)),
            consts=consts, periodicity=periodicity, weight=weight, profile=profile,
        )


@dataclass(frozen=True, eq=False)
class SurfaceIntegrand:
    eval: Callable[[Array, Array, Array], Array]
    recession_eval: Callable[[Array, Array, Array], Array]
    consts: StructuralConstants
    periodicity: str = "homogeneous"
    weight: Callable | None = None
    profile: Profile | None = None

    def __call__(self, x, zeta, nu):
        return self.eval(np.asarray(x, dtype=float), np.asarray(zeta, dtype=float),
                         np.asarray(nu, dtype=float))

    @property
    def radial(self) -> bool:
        return self.weight is not None and self.profile is not None

    @classmethod
    def from_radial(cls, weight, profile: Profile, consts, periodicity="homogeneous"):
        rec = profile.recession()
        return cls(
            eval=lambda x, z, n: weight(x) * profile.value(frob(sym_tensor(z, n))),
            recession_eval=lambda x, z, n: weight(x) * rec.value(frob(sym_tensor(z, n))),
            consts=consts, periodicity=periodicity, weight=weight, profile=profile,
        )

    def hat(self, x, B) -> tuple[Array, Array]:
        """Infimum of g(x, zeta, nu) over zeta (.) nu = B.

        Returns (value, decomposable); value is NaN where B admits no
        decomposition.
        """
        x = np.asarray(x, dtype=float)
        B = np.asarray(B, dtype=float)
        if self.radial:
            dec = decomposable(B)
            val = self.weight(x) * self.profile.value(frob(B))
            return np.where(dec, val, np.nan), dec
        cands, dec = rank_one_decompositions(B)
        best = np.full(B.shape[:-2], np.inf)
        for zeta, nu in cands:
            best = np.minimum(best, self.eval(x, zeta, nu))
        return np.where(dec, best, np.nan), dec


@dataclass(frozen=True, eq=False)
class IntegrandPair:
    f: BulkIntegrand
    g: SurfaceIntegrand
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.f.consts != self.g.consts:
            raise ValueError("bulk and surface integrands must share structural constants")

    @property
    def consts(self) -> StructuralConstants:
        return self.f.consts

    @property
    def radial(self) -> bool:
        return self.f.radial and self.g.radial


# --- rank-one structure -------------------------------------------------------

EIG_TOL = 1e-9


def decomposable(B) -> Array:
    """True where the symmetric B equals zeta (.) nu for some zeta, nu."""
    B = np.asarray(B, dtype=float)
    d = B.shape[-1]
    if d == 1:
        return np.ones(B.shape[:-2], dtype=bool)
    scale = frob(B)
    if d == 2:
        det = B[..., 0, 0] * B[..., 1, 1] - B[..., 0, 1] * B[..., 1, 0]
        return det <= EIG_TOL * scale * scale
    lam = np.linalg.eigvalsh(B)
    tol = EIG_TOL * np.maximum(scale, np.finfo(float).tiny)
    small = np.abs(lam) <= tol[..., None]
    n_small = small.sum(-1)
    pos = (lam > tol[..., None]).sum(-1)
    neg = (lam < -tol[..., None]).sum(-1)
    return (n_small >= 2) | ((n_small == 1) & (pos == 1) & (neg == 1))


def rank_one_decompositions(B):
    """Candidate pairs (zeta, nu) with zeta (.) nu = B, plus the decomposable mask.

    Rank <= 1: B = lam e e^T gives (lam e, e).  Indefinite rank 2 with
    eigenpairs (l1 > 0, e1), (l2 < 0, e2): with a = sqrt(l1) e1 + sqrt(-l2) e2
    and b = sqrt(l1) e1 - sqrt(-l2) e2 we have a (.) b = B, so the two
    candidates are (|b| a, b/|b|) and (|a| b, a/|a|).
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[-1]
    dec = decomposable(B)
    if d == 1:
        z = B[..., 0]
        nu = np.ones_like(z)
        return [(z, nu)], dec
    lam, vec = np.linalg.eigh(B)
    scale = frob(B)
    tol = EIG_TOL * np.maximum(scale, np.finfo(float).tiny)
    i_max = np.argmax(np.abs(lam), axis=-1)
    take = lambda arr, idx: np.take_along_axis(arr, idx[..., None], axis=-1)[..., 0]
    l_max = take(lam, i_max)
    e_max = np.take_along_axis(vec, i_max[..., None, None], axis=-1)[..., 0]
    # rank-one branch
    z1 = l_max[..., None] * e_max
    # indefinite branch
    l_hi, l_lo = lam[..., -1], lam[..., 0]
    e_hi, e_lo = vec[..., :, -1], vec[..., :, 0]
    sp = np.sqrt(np.maximum(l_hi, 0.0))[..., None]
    sn = np.sqrt(np.maximum(-l_lo, 0.0))[..., None]
    a = sp * e_hi + sn * e_lo
    b = sp * e_hi - sn * e_lo
    na = np.linalg.norm(a, axis=-1)[..., None]
    nb = np.linalg.norm(b, axis=-1)[..., None]
    rank2 = (l_hi > tol) & (l_lo < -tol)
    safe = lambda v, n: v / np.where(n > 0, n, 1.0)
    cand = []
    for zeta, nu in ((nb * a, safe(b, nb)), (na * b, safe(a, na))):
        zeta = np.where(rank2[..., None], zeta, z1)
        nu = np.where(rank2[..., None], nu, e_max)
        cand.append((zeta, nu))
    return cand, dec


# --- recession checks -----------------------------------------------------------

DEFAULT_T_GRID = tuple(10.0 ** k for k in range(0, 7))


def recession_estimate(f: BulkIntegrand, x, A, t_grid=DEFAULT_T_GRID) -> dict:
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0) or t[-1] < 1e4:
        raise ValueError("t_grid must be increasing with max >= 1e4")
    x = np.asarray(x, dtype=float)
    A = sym_matrix(A)
    vals = np.array([float(f(x, ti * A)) / ti for ti in t])
    est = vals[-1]
    dev = np.abs(vals - est)
    c = f.consts
    a = c.alpha
    C_A = c.c6 + c.c4 ** (1 - a) + c.c6 * c.c3 ** (1 - a) * float(frob(A)) ** (1 - a)
    mask = t >= 1
    bound = C_A / t ** a
    violated = bool(np.any(dev[mask] > bound[mask] + 1e-12 * (1 + abs(est))))
    return {"value": est, "t": t.tolist(), "deviation": dev.tolist(),
            "rate_bound": bound.tolist(), "violated": violated}


def g_infinity_estimate(g: SurfaceIntegrand, x, zeta, nu, t_grid=DEFAULT_T_GRID) -> dict:
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0) or t[-1] < 1e4:
        raise ValueError("t_grid must be increasing with max >= 1e4")
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    vals = np.array([float(g(x, ti * zeta, nu)) / ti for ti in t])
    est = vals[-1]
    dev = np.abs(vals - est)
    c = g.consts
    bound = 2 * c.c3 * c.c7 * float(frob(sym_tensor(zeta, nu))) / t
    violated = bool(np.any(dev > bound + 1e-12 * (1 + abs(est))))
    return {"value": est, "t": t.tolist(), "deviation": dev.tolist(),
            "rate_bound": bound.tolist(), "violated": violated}


# --- validation -------------------------------------------------------------------

@dataclass(frozen=True)
class SamplePlan:
    xs: Array
    As: Array
    zetas: Array
    nus: Array
    s_grid: tuple = (0.5, 1.0, 2.0, 10.0, 100.0)


def default_sample_plan(d: int = 2, seed: int = 0, n_x: int = 16, n_A: int = 40,
                        n_zeta: int = 12, n_nu: int = 8) -> SamplePlan:
    """Deterministic sampling plan; strain norms stay within {0, .., 2}."""
    rng = np.random.default_rng(seed)
    xs = [np.zeros(d), np.full(d, 0.25), np.full(d, 0.5)]
    on_plane = rng.uniform(-2, 2, size=(3, d))
    on_plane[:, -1] = 0.0
    xs.extend(on_plane)
    xs.extend(rng.uniform(-2, 2, size=(n_x - len(xs), d)))
    norms = (0.0, 0.25, 0.5, 1.0, 2.0)
    As = []
    for k in range(n_A):
        M = sym_matrix(rng.normal(size=(d, d)))
        M = M / frob(M)
        As.append(norms[k % len(norms)] * M)
    eye = np.eye(d)
    As.append(sym_tensor(eye[0], eye[0]))
    As.append(eye.copy())
    if d > 1:
        As.append(sym_tensor(eye[0], eye[1]))
    zetas = [np.zeros(d)]
    for k in range(n_zeta - 1):
        z = rng.normal(size=d)
        zetas.append(norms[1 + k % (len(norms) - 1)] * z / np.linalg.norm(z))
    nus = list(eye)
    while len(nus) < n_nu:
        v = rng.normal(size=d)
        nus.append(v / np.linalg.norm(v))
    return SamplePlan(np.array(xs), np.array(As), np.array(zetas), np.array(nus))


def _check(name, lhs, rhs, info) -> dict:
    """Pass iff lhs <= rhs (with float slack) everywhere; report the worst sample."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    excess = lhs - rhs
    slack = 1e-12 * (1.0 + np.abs(lhs) + np.abs(rhs))
    bad = excess > slack
    k = int(np.argmax(excess)) if excess.size else 0
    report = {"pass": bool(not bad.any()), "n_samples": int(lhs.size),
              "n_violations": int(bad.sum()), "max_excess": float(excess.flat[k]) if excess.size else 0.0}
    if bad.any():
        report["worst"] = info(k)
        report["violating_norms"] = sorted({round(float(v), 12) for v in
                                            np.asarray(info("norms"))[bad.ravel()]})
    return report


def check_integrand(p: IntegrandPair, plan: SamplePlan | None = None) -> dict:
    """Evaluate (f2), (f3), (f4), (g2), (g3), (g4), (g5) and recession bounds on a plan."""
    c = p.consts
    a = c.alpha
    if plan is None:
        plan = default_sample_plan()
    xs, As, zetas, nus = plan.xs, plan.As, plan.zetas, plan.nus
    nx, nA = len(xs), len(As)
    X = np.repeat(xs, nA, axis=0)
    AA = np.tile(As, (nx, 1, 1))
    nA_ = frob(AA)
    F = p.f(X, AA)
    out = {}

    def at(idx_arr, extra):
        def info(k):
            if isinstance(k, str):
                return extra
            return {"x": X[k % len(X)].tolist(), "norm": float(np.ravel(extra)[k])}
        return info

    out["f2_lower"] = _check("f2", c.c1 * nA_ - c.c2, F, at(None, nA_))
    out["f2_upper"] = _check("f2", F, c.c3 * nA_ + c.c4, at(None, nA_))
    Finf = p.f.recession_eval(X, AA)
    out["f_recession_bounds"] = _check("finf", np.concatenate([c.c1 * nA_, Finf]),
                                       np.concatenate([Finf, c.c3 * nA_]),
                                       at(None, np.concatenate([nA_, nA_])))
    # (f3): all pairs of strains at each x
    i, j = np.triu_indices(nA, 1)
    X2 = np.repeat(xs, len(i), axis=0)
    A1 = np.tile(As[i], (nx, 1, 1))
    A2 = np.tile(As[j], (nx, 1, 1))
    dist = frob(A1 - A2)
    out["f3"] = _check("f3", np.abs(p.f(X2, A1) - p.f(X2, A2)), c.c5 * dist, at(None, dist))
    # (f4) verbatim over all (s, t)
    lhs4, rhs4, nn = [], [], []
    for s in plan.s_grid:
        fs = p.f(X, s * AA)
        for t in plan.s_grid:
            ft = p.f(X, t * AA)
            lhs4.append(np.abs(fs / s - ft / t))
            rhs4.append(c.c6 / s * np.maximum(fs, 0) ** (1 - a) + c.c6 / s
                        + c.c6 / t * np.maximum(ft, 0) ** (1 - a) + c.c6 / t)
            nn.append(nA_)
    out["f4"] = _check("f4", np.concatenate(lhs4), np.concatenate(rhs4), at(None, np.concatenate(nn)))

    # surface samples: x * zeta * nu
    nz, nn_ = len(zetas), len(nus)
    Xg = np.repeat(xs, nz * nn_, axis=0)
    Z = np.tile(np.repeat(zetas, nn_, axis=0), (nx, 1))
    N = np.tile(nus, (nx * nz, 1))
    zn = frob(sym_tensor(Z, N))
    G = p.g(Xg, Z, N)
    out["g2"] = _check("g2", np.abs(G - p.g(Xg, -Z, -N)), np.zeros_like(G), at(None, zn))
    out["g3_lower"] = _check("g3", c.c1 * zn, G, at(None, zn))
    out["g3_upper"] = _check("g3", G, c.c3 * zn, at(None, zn))
    # (g4): pairs of amplitudes at common (x, nu)
    zi, zj = np.triu_indices(nz, 1)
    X4 = np.repeat(xs, len(zi) * nn_, axis=0)
    Z1 = np.tile(np.repeat(zetas[zi], nn_, axis=0), (nx, 1))
    Z2 = np.tile(np.repeat(zetas[zj], nn_, axis=0), (nx, 1))
    N4 = np.tile(nus, (nx * len(zi), 1))
    dz = np.linalg.norm(Z1 - Z2, axis=-1)
    out["g4"] = _check("g4", np.abs(p.g(X4, Z1, N4) - p.g(X4, Z2, N4)), c.sigma1 * dz, at(None, dz))
    lhs5, rhs5, nn5 = [], [], []
    for s in plan.s_grid:
        gs = p.g(Xg, s * Z, N) / s
        for t in plan.s_grid:
            gt = p.g(Xg, t * Z, N) / t
            lhs5.append(np.abs(gs - gt))
            rhs5.append(c.c7 * (gs + gt) * (1 / s + 1 / t))
            nn5.append(zn)
    out["g5"] = _check("g5", np.concatenate(lhs5), np.concatenate(rhs5), at(None, np.concatenate(nn5)))
    Ginf = p.g.recession_eval(Xg, Z, N)
    out["g_recession_homogeneous"] = _check(
        "ginf", np.abs(p.g.recession_eval(Xg, 2 * Z, N) - 2 * Ginf), np.zeros_like(Ginf), at(None, zn))
    return {"pair": p.name, "conditions": out, "all_pass": all(v["pass"] for v in out.values()),
            "failed": [k for k, v in out.items() if not v["pass"]]}


# --- rescaling and recession pairs ---------------------------------------------------

def rescale_pair(p: IntegrandPair, eps: float) -> IntegrandPair:
    """(f_eps, g_eps)(x, ...) = (f(x/eps, A), eps * g(x/eps, zeta/eps, nu))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    eps = float(eps)
    if eps == 1.0:
        return p
    f, g = p.f, p.g
    if p.f.radial:
        w = f.weight
        fe = BulkIntegrand.from_radial(lambda x: w(x / eps), f.profile, f.consts, f.periodicity)
    else:
        fe = BulkIntegrand(lambda x, A: f.eval(x / eps, A),
                           lambda x, A: f.recession_eval(x / eps, A), f.consts, f.periodicity)
    if p.g.radial:
        w = g.weight
        ge = SurfaceIntegrand.from_radial(lambda x: w(x / eps), g.profile.rescaled(eps),
                                          g.consts, g.periodicity)
    else:
        ge = SurfaceIntegrand(lambda x, z, n: eps * g.eval(x / eps, z / eps, n),
                              lambda x, z, n: g.recession_eval(x / eps, z, n),
                              g.consts, g.periodicity)
    params = dict(p.params)
    params["eps"] = eps * params.get("eps", 1.0)
    return IntegrandPair(fe, ge, p.name, params)


def recession_pair(p: IntegrandPair) -> IntegrandPair:
    """The pair (f^inf, g^inf) used by the surface cell formula."""
    f, g = p.f, p.g
    if f.radial:
        fi = BulkIntegrand.from_radial(f.weight, f.profile.recession(), f.consts, f.periodicity)
    else:
        fi = BulkIntegrand(f.recession_eval, f.recession_eval, f.consts, f.periodicity)
    if g.radial:
        gi = SurfaceIntegrand.from_radial(g.weight, g.profile.recession(), g.consts, g.periodicity)
    else:
        gi = SurfaceIntegrand(g.recession_eval, g.recession_eval, g.consts, g.periodicity)
    return IntegrandPair(fi, gi, p.name + "^inf", dict(p.params, recession=True))


# --- library -------------------------------------------------------------------

def _radial_pair(name, params, consts, bulk_w, bulk_prof, surf_w, surf_prof, periodicity):
    return IntegrandPair(
        BulkIntegrand.from_radial(bulk_w, bulk_prof, consts, periodicity),
        SurfaceIntegrand.from_radial(surf_w, surf_prof, consts, periodicity),
        name, params,
    )


def _two_phase_consts(a_soft, a_hard) -> StructuralConstants:
    if not (0 < a_soft <= a_hard):
        raise ValueError(f"need 0 < a_soft <= a_hard, got {a_soft}, {a_hard}")
    return StructuralConstants(c1=a_soft, c3=a_hard, c5=a_hard, sigma1=a_hard)


def laminate_weight(a_soft: float, a_hard: float, direction) -> Callable:
    """a(x) = a_soft where frac(x . direction) < 1/2, a_hard elsewhere."""
    direction = None if direction is None else np.asarray(direction, dtype=float)

    def weight(x):
        x = np.asarray(x, dtype=float)
        if direction is None:
            s = x[..., 0]
        elif direction.ndim == 0:
            s = x[..., int(direction)]
        else:
            s = x @ direction[: x.shape[-1]]
        frac = s - np.floor(s)
        return np.where(frac < 0.5, a_soft, a_hard)
    return weight


def checkerboard_weight(a_soft: float, a_hard: float) -> Callable:
    """Unit-periodic checkerboard of side-1/2 squares; the square at the origin is soft."""
    def weight(x):
        k = np.floor(2.0 * np.asarray(x, dtype=float)).astype(np.int64).sum(axis=-1)
        return np.where(k % 2 == 0, a_soft, a_hard)
    return weight


def hyperplane_weight(c_on: float, c_off: float) -> Callable:
    def weight(x):
        x = np.asarray(x, dtype=float)
        return np.where(x[..., -1] == 0.0, c_on, c_off)
    return weight


LIBRARY = ("homogeneous_norm", "smooth_nonhomogeneous", "laminate", "checkerboard",
           "random_checkerboard", "hyperplane_weak_surface")


def make_library_integrand(name: str, params: dict | None = None, **kw) -> IntegrandPair:
    """Build a named library pair.  Parameters may be given as a dict or keywords."""
    params = dict(params or {}, **kw)
    lin = linear_profile(1.0)
    if name == "homogeneous_norm":
        scale = float(params.get("scale", 1.0))
        consts = StructuralConstants(c1=scale, c3=scale, c5=scale, sigma1=scale)
        w = constant_weight(scale)
        return _radial_pair(name, params, consts, w, lin, w, lin, "homogeneous")
    if name == "smooth_nonhomogeneous":
        # 0 <= |A| - f(tA)/t <= 1/t, so (f4) holds with c6 = 1
        consts = StructuralConstants(c1=1.0, c2=1.0, c3=1.0, c4=0.0, c5=1.0,
                                     c6=float(params.get("c6", 1.0)), alpha=0.5)
        w = constant_weight(1.0)
        return _radial_pair(name, params, consts, w, smooth_profile(), w, lin, "homogeneous")
    if name == "laminate":
        a_soft = float(params.get("a_soft", 1.0))
        a_hard = float(params.get("a_hard", 2.0))
        consts = _two_phase_consts(a_soft, a_hard)
        w = laminate_weight(a_soft, a_hard, params.get("direction", 0))
        return _radial_pair(name, params, consts, w, lin, w, lin, "periodic")
    if name == "checkerboard":
        a_soft = float(params.get("a_soft", 1.0))
        a_hard = float(params.get("a_hard", 2.0))
        consts = _two_phase_consts(a_soft, a_hard)
        w = checkerboard_weight(a_soft, a_hard)
        return _radial_pair(name, params, consts, w, lin, w, lin, "periodic")
    if name == "random_checkerboard":
        from .stochastic import Law, sample_field, stochastic_pair
        law = params.get("law", {"kind": "bernoulli", "p": 0.5, "a_soft": 1.0, "a_hard": 2.0})
        law = law if isinstance(law, Law) else Law.from_dict(law)
        field_ = sample_field(int(params.get("seed", 0)), law)
        return stochastic_pair(field_, make_library_integrand("homogeneous_norm"))
    if name == "hyperplane_weak_surface":
        c1 = float(params.get("c1", 1.0))
        c3 = float(params.get("c3", 2.0))
        if not (0 < c1 <= c3):
            raise ValueError(f"need 0 < c1 <= c3, got {c1}, {c3}")
        consts = StructuralConstants(c1=c1, c3=c3, c5=c3, sigma1=c3)
        return _radial_pair(name, params, consts, constant_weight(c3), lin,
                            hyperplane_weight(c1, c3), lin, "heterogeneous")
    raise ValueError(f"unknown library integrand {name!r}; known: {', '.join(LIBRARY)}")


def quadratic_pair(consts: StructuralConstants | None = None) -> IntegrandPair:
    """f = |A|^2 with linear-growth constants declared: a deliberately invalid pair."""
    consts = consts or StructuralConstants()
    f = BulkIntegrand(lambda x, A: frob(A) ** 2,
                      lambda x, A: np.where(frob(A) > 0, np.inf, 0.0), consts)
    g = SurfaceIntegrand.from_radial(constant_weight(1.0), linear_profile(1.0), consts)
    return IntegrandPair(f, g, "quadratic", {})
