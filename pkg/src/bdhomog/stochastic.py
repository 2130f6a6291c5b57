"""Stationary random coefficients and the subadditive process of cell minima.

Marks live on the unit cells z in Z^d.  Each mark is a pure function of
(master_seed, z): a splitmix64-style hash of both, turned into a uniform
number and pushed through the inverse CDF of the law.  Shifting the field is
an index offset, so covariance holds exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cell_formulas import estimate_f_lim, estimate_g_lim
from .integrands import BulkIntegrand, IntegrandPair, StructuralConstants, SurfaceIntegrand, frob
from .lattice import BoundaryDatum, Grid
from .solver import SolveOptions, SolveResult, minimize

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def hash_uniform(seed: int, z: np.ndarray) -> np.ndarray:
    """Uniform numbers in [0, 1) from a 64-bit hash of (seed, z); z has shape (..., d)."""
    z = np.asarray(z, dtype=np.int64)
    with np.errstate(over="ignore"):
        h = _mix(np.full(z.shape[:-1], np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) + _GAMMA)
        for k in range(z.shape[-1]):
            zk = z[..., k].astype(np.uint64)          # two's complement wrap for negatives
            h = _mix(h ^ (zk + _GAMMA * np.uint64(k + 1)))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class Law:
    """Marginal law of the marks.

    bernoulli: a_soft with probability p, a_hard otherwise;
    uniform: uniform on [a_min, a_max]; point: the constant ``value``.
    """

    kind: str
    p: float = 0.5
    a_soft: float = 1.0
    a_hard: float = 2.0
    a_min: float = 1.0
    a_max: float = 2.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind == "bernoulli":
            if not (0 <= self.p <= 1) or not (0 < self.a_soft <= self.a_hard):
                raise ValueError("bernoulli law needs p in [0,1] and 0 < a_soft <= a_hard")
        elif self.kind == "uniform":
            if not (0 < self.a_min <= self.a_max):
                raise ValueError("uniform law needs 0 < a_min <= a_max")
        elif self.kind == "point":
            if not self.value > 0:
                raise ValueError("point law needs a positive value")
        else:
            raise ValueError(f"unknown law {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "Law":
        d = dict(d)
        return cls(d.pop("kind"), **d)

    def as_dict(self) -> dict:
        keys = {"bernoulli": ("p", "a_soft", "a_hard"), "uniform": ("a_min", "a_max"),
                "point": ("value",)}[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "bernoulli":
            return np.where(u < self.p, self.a_soft, self.a_hard)
        if self.kind == "uniform":
            return self.a_min + (self.a_max - self.a_min) * u
        return np.full(np.shape(u), self.value)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "bernoulli":
            lo = self.a_soft if self.p > 0 else self.a_hard
            hi = self.a_hard if self.p < 1 else self.a_soft
            return lo, hi
        if self.kind == "uniform":
            return self.a_min, self.a_max
        return self.value, self.value


@dataclass(frozen=True)
class RandomField:
    master_seed: int
    law: Law
    offset: tuple = ()

    def mark(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.int64)
        if self.offset:
            z = z + np.asarray(self.offset, dtype=np.int64)
        return self.law.inverse_cdf(hash_uniform(self.master_seed, z))

    def mark_at(self, x) -> np.ndarray:
        """Mark of the unit cell containing each point."""
        return self.mark(np.floor(np.asarray(x, dtype=float)).astype(np.int64))

    def shift_by(self, z0) -> "RandomField":
        z0 = tuple(int(v) for v in np.atleast_1d(z0))
        base = self.offset or (0,) * len(z0)
        return RandomField(self.master_seed, self.law, tuple(a + b for a, b in zip(base, z0)))


def sample_field(master_seed: int, law: Law) -> RandomField:
    return RandomField(int(master_seed), law)


def stochastic_pair(field_: RandomField, template: IntegrandPair) -> IntegrandPair:
    """Pair with both weights multiplied by the mark of the unit cell: f(w, x, A) = mark(x) f0(x, A)."""
    if not template.radial:
        raise ValueError("the template pair must be radial")
    lo, hi = field_.law.support
    c = template.consts
    scale_c6 = max(hi, hi ** c.alpha, lo, lo ** c.alpha)
    consts = StructuralConstants(
        c1=lo * c.c1, c2=hi * c.c2, c3=hi * c.c3, c4=hi * c.c4, c5=hi * c.c5,
        c6=scale_c6 * c.c6, c7=c.c7, alpha=c.alpha, sigma1=hi * c.sigma1)
    wf, wg = template.f.weight, template.g.weight
    f = BulkIntegrand.from_radial(lambda x: field_.mark_at(x) * wf(x), template.f.profile,
                                  consts, "stationary_random")
    g = SurfaceIntegrand.from_radial(lambda x: field_.mark_at(x) * wg(x), template.g.profile,
                                     consts, "stationary_random")
    params = {"template": template.name, "seed": field_.master_seed,
              "law": field_.law.as_dict(), "offset": list(field_.offset)}
    return IntegrandPair(f, g, f"random[{template.name}]", params)


@dataclass(frozen=True)
class Rectangle:
    """[a_1, b_1) x ... x [a_d, b_d)."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"empty rectangle {lo}..{hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def shifted(self, z) -> "Rectangle":
        z = np.atleast_1d(z)
        return Rectangle(tuple(np.add(self.lower, z)), tuple(np.add(self.upper, z)))

    def grid(self, h: float) -> Grid:
        return Grid.box(self.lower, self.upper, h)

    def intersection_volume(self, other: "Rectangle") -> float:
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        return float(np.prod(np.clip(hi - lo, 0, None)))

    def contains(self, other: "Rectangle") -> bool:
        return all(a <= c for a, c in zip(self.lower, other.lower)) and \
            all(d_ <= b for b, d_ in zip(self.upper, other.upper))

    def as_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass
class SubadditiveSample:
    seed: int
    rectangle: Rectangle
    A: np.ndarray
    value: float
    normalized: float
    bound_ok: bool
    result: SolveResult | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "rectangle": self.rectangle.as_dict(),
                "A": np.asarray(self.A).tolist(), "value": self.value,
                "normalized": self.normalized, "bound_ok": self.bound_ok}


def mu(field_: RandomField, template: IntegrandPair, A, R: Rectangle,
       opts: SolveOptions | None = None, h: float = 0.125, initial_fields=()) -> SubadditiveSample:
    """Cell minimum of the affine datum A on the open rectangle R."""
    pair = stochastic_pair(field_, template)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    res = minimize(pair, R.grid(h), BoundaryDatum.affine(A), opts, initial_fields)
    c = pair.consts
    vol = R.volume
    C = c.c3 * float(frob(A)) + c.c4
    ok = 0.0 <= res.energy <= C * vol * (1 + 1e-12)
    return SubadditiveSample(field_.master_seed, R, A, res.energy, res.energy / vol, bool(ok), res)


def validate_partition(R: Rectangle, parts) -> None:
    if not parts:
        raise ValueError("empty partition")
    for P in parts:
        if not R.contains(P):
            raise ValueError(f"part {P} is not inside {R}")
    for i, P in enumerate(parts):
        for Q in parts[i + 1:]:
            if P.intersection_volume(Q) > 0:
                raise ValueError(f"parts {P} and {Q} overlap")
    if not math.isclose(sum(P.volume for P in parts), R.volume, rel_tol=1e-12):
        raise ValueError("parts do not cover the rectangle")


def _glue(R: Rectangle, h: float, samples) -> np.ndarray:
    """Assemble part minimizers into one field on R; shared faces carry the same datum."""
    grid = R.grid(h)
    vals = np.zeros(grid.shape + (grid.d,))
    for s in samples:
        off = np.rint((np.asarray(s.rectangle.lower) - np.asarray(R.lower)) / h).astype(int)
        sl = tuple(slice(o, o + n) for o, n in zip(off, s.result.field.grid.shape))
        vals[sl] = s.result.field.values
    return vals


def check_subadditivity(field_: RandomField, A, R: Rectangle, partition, template: IntegrandPair,
                        opts: SolveOptions | None = None, h: float = 0.125) -> dict:
    """mu(R) <= sum_i mu(R_i) + n tol, with the glued part minimizers offered as a competitor."""
    validate_partition(R, partition)
    opts = opts or SolveOptions()
    parts = [mu(field_, template, A, P, opts, h) for P in partition]
    total = sum(s.value for s in parts)
    glued = _glue(R, h, parts) if len(partition) > 1 else None
    whole = mu(field_, template, A, R, opts, h, initial_fields=() if glued is None else (glued,))
    n = len(partition)
    slack = total - whole.value
    tol = n * opts.tol_energy * max(abs(whole.value), 1e-300)
    return {"seed": field_.master_seed, "rectangle": R.as_dict(),
            "partition": [P.as_dict() for P in partition], "mu_whole": whole.value,
            "mu_parts": [s.value for s in parts], "slack": slack, "n": n,
            "holds": bool(slack >= -tol),
            "bounds_ok": bool(whole.bound_ok and all(s.bound_ok for s in parts))}


def check_covariance(field_: RandomField, template: IntegrandPair, A, R: Rectangle, z,
                     opts: SolveOptions | None = None, h: float = 0.125) -> dict:
    """mu(w, R + z) against mu(tau_z w, R)."""
    opts = opts or SolveOptions()
    a = mu(field_, template, A, R.shifted(z), opts, h)
    b = mu(field_.shift_by(z), template, A, R, opts, h)
    gap = abs(a.value - b.value)
    tol = 2 * opts.tol_energy * max(abs(a.value), 1e-300)
    return {"seed": field_.master_seed, "z": list(np.atleast_1d(z).tolist()),
            "mu_shifted_rectangle": a.value, "mu_shifted_field": b.value, "gap": gap,
            "holds": bool(gap <= tol)}


def random_partition(R: Rectangle, rng: np.random.Generator, h: float, max_parts: int = 4) -> list:
    """Random guillotine partition along lattice-commensurate cuts."""
    parts = [R]
    target = int(rng.integers(2, max_parts + 1))
    for _ in range(50):
        if len(parts) >= target:
            break
        i = int(rng.integers(len(parts)))
        P = parts[i]
        axis = int(rng.integers(P.d))
        lo, hi = P.lower[axis], P.upper[axis]
        n = int(round((hi - lo) / h))
        if n < 16:          # keep >= 8 cells on each side of a cut
            continue
        cut = lo + h * int(rng.integers(8, n - 7))
        up = list(P.upper)
        up[axis] = cut
        low = list(P.lower)
        low[axis] = cut
        parts[i:i + 1] = [Rectangle(P.lower, tuple(up)), Rectangle(tuple(low), P.upper)]
    return parts


def ergodic_average(law: Law, target, r_schedule=(4, 8, 16), n_seeds: int = 16,
                    template: IntegrandPair | None = None, opts: SolveOptions | None = None,
                    seeds=None, cells_per_unit: int = 8, workers: int = 1) -> dict:
    """Cross-seed statistics of normalized cell values for iid marks.

    ``target`` is a matrix A (bulk) or a pair (zeta, nu) (surface, recession pair).
    """
    from .integrands import make_library_integrand

    if n_seeds < 8:
        raise ValueError("need at least 8 seeds")
    template = template or make_library_integrand("homogeneous_norm")
    seeds = list(range(n_seeds)) if seeds is None else [int(s) for s in seeds][:n_seeds]
    surface = isinstance(target, (tuple, list)) and len(target) == 2 and np.ndim(target[0]) == 1
    rows, records = [], []
    for s in seeds:
        pair = stochastic_pair(sample_field(s, law), template)
        if surface:
            rec = estimate_g_lim(pair, target[0], target[1], r_schedule, None, opts,
                                 cells_per_unit, workers=workers)
        else:
            rec = estimate_f_lim(pair, target, r_schedule, None, opts, cells_per_unit,
                                 workers=workers)
        records.append(rec)
        for r, v in zip(rec.r_values, rec.normalized_values):
            rows.append((s, r, v))
    vals = np.array([rec.normalized_values for rec in records])
    mean = vals.mean(axis=0)
    std = vals.std(axis=0, ddof=1)
    lo, hi = law.support
    c = template.consts
    nA = None if surface else float(frob(np.atleast_2d(target)))
    bounds_ok = True
    if not surface:
        bounds_ok = bool(np.all(vals >= lo * c.c1 * nA - hi * c.c2 - 1e-12)
                         and np.all(vals <= hi * c.c3 * nA + hi * c.c4 + 1e-12))
    return {"law": law.as_dict(), "seeds": seeds, "r_values": records[0].r_values,
            "rows": rows, "mean": mean.tolist(), "std": std.tolist(),
            "std_nonincreasing": bool(std[-1] <= std[0]), "bounds_ok": bounds_ok,
            "kind": "surface" if surface else "bulk", "records": records}


def process_trials(law: Law, template: IntegrandPair, A, n_trials: int = 20, rng_seed: int = 0,
                   opts: SolveOptions | None = None, h: float = 0.125, max_side: int = 3) -> dict:
    """Subadditivity, covariance and the volume bound on random (seed, rectangle, partition) triples."""
    rng = np.random.default_rng(rng_seed)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    c = template.consts
    rows = []
    for _ in range(n_trials):
        seed = int(rng.integers(0, 2 ** 62))
        lower = rng.integers(-4, 5, size=d)
        sides = rng.integers(1, max_side + 1, size=d)
        R = Rectangle(tuple(lower), tuple(lower + sides))
        parts = random_partition(R, rng, h)
        z = rng.integers(-3, 4, size=d)
        fld = sample_field(seed, law)
        sub = check_subadditivity(fld, A, R, parts, template, opts, h)
        cov = check_covariance(fld, template, A, R, z, opts, h)
        hi = law.support[1]
        C = hi * (c.c3 * float(frob(A)) + c.c4)
        bound_ok = bool(0 <= sub["mu_whole"] <= C * R.volume * (1 + 1e-12)
                        and all(0 <= m <= C * P.volume * (1 + 1e-12)
                                for m, P in zip(sub["mu_parts"], parts)))
        rows.append({"seed": seed, "rectangle": R.as_dict(), "n_parts": len(parts),
                     "slack": sub["slack"], "subadditive": sub["holds"], "z": z.tolist(),
                     "covariance_gap": cov["gap"], "covariant": cov["holds"],
                     "mu": sub["mu_whole"], "bound_ok": bound_ok})
    return {"law": law.as_dict(), "A": A.tolist(), "trials": rows,
            "all_pass": all(r["subadditive"] and r["covariant"] and r["bound_ok"] for r in rows)}
