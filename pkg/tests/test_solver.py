from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdhomog.integrands import frob, make_library_integrand, sym_tensor
from bdhomog.lattice import BoundaryDatum, Grid, apply_datum, assemble_energy
from bdhomog.solver import SolveOptions, brute_force_min, minimize, quantization_gap

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
HOM = make_library_integrand("homogeneous_norm")
QUANT = np.linspace(-1.0, 1.0, 5)


@pytest.mark.parametrize("A", [sym_tensor(E1, E1), np.eye(2), sym_tensor(E1, E2)])
def test_jensen_homogeneous(A):
    g = Grid.cube(2, 9, 0.5)
    res = minimize(HOM, g, BoundaryDatum.affine(A), SolveOptions(multistart=1))
    assert res.energy == pytest.approx(float(frob(A)) * g.r ** 2, rel=1e-9)
    assert res.certificate == "candidate_upper_bound"


@pytest.mark.parametrize("name", ["homogeneous_norm", "laminate", "checkerboard", "smooth_nonhomogeneous"])
def test_zero_datum_gives_zero(name):
    g = Grid.cube(2, 6, 0.5)
    res = minimize(make_library_integrand(name), g, BoundaryDatum.affine(np.zeros((2, 2))))
    assert res.energy == 0.0
    assert not np.any(res.field.values)


@pytest.mark.parametrize("nu", [E2, np.array([1.0, 1.0]) / math.sqrt(2)])
def test_jump_squeeze(nu):
    h, n = 0.25, 17
    g = Grid.cube(2, n, h, nu=nu)
    zeta = E1
    res = minimize(HOM, g, BoundaryDatum.jump(np.zeros(2), zeta, nu), SolveOptions(multistart=1))
    s = float(frob(sym_tensor(zeta, nu)))
    r = g.r
    assert s * (1 - 5 * h / r) <= res.energy / r <= s * (1 + 5 * h / r)


@pytest.mark.parametrize("name", ["laminate", "checkerboard", "hyperplane_weak_surface", "smooth_nonhomogeneous"])
def test_energy_recomputed_and_bounded_by_datum(name):
    p = make_library_integrand(name)
    g = Grid.cube(2, 7, 0.25)
    datum = BoundaryDatum.affine(sym_tensor(E1, E1))
    res = minimize(p, g, datum, SolveOptions(multistart=2))
    assert res.energy == assemble_energy(res.field, p)
    assert res.energy <= assemble_energy(apply_datum(g, datum), p)
    u0 = apply_datum(g, datum)
    mask = g.boundary_mask()
    assert np.array_equal(res.field.values[mask], u0.values[mask])


def test_deterministic():
    p = make_library_integrand("checkerboard")
    g = Grid.cube(2, 7, 0.25)
    datum = BoundaryDatum.jump(np.array([0.0, 0.1]), E1, E2)
    a = minimize(p, g, datum, SolveOptions(seed=3))
    b = minimize(p, g, datum, SolveOptions(seed=3))
    assert a.energy == b.energy and a.start_index == b.start_index
    assert np.array_equal(a.field.values, b.field.values)
    assert a.stage_energies == b.stage_energies


def test_stage_energies_monotone():
    p = make_library_integrand("laminate")
    g = Grid.cube(2, 9, 0.25)
    res = minimize(p, g, BoundaryDatum.affine(sym_tensor(E1, E1)), SolveOptions(multistart=1))
    assert res.stage_energies
    for hist in res.stage_energies:
        diffs = np.diff(hist)
        assert np.all(diffs <= 1e-12 * max(1.0, abs(hist[0])))


def test_warm_start_never_worse():
    p = make_library_integrand("laminate")
    g = Grid.cube(2, 7, 0.25)
    datum = BoundaryDatum.affine(sym_tensor(E1, E1))
    cold = minimize(p, g, datum, SolveOptions(multistart=1))
    warm = minimize(p, g, datum, SolveOptions(multistart=1), initial_fields=[cold.field.values])
    assert warm.energy <= cold.energy


def test_result_json():
    g = Grid.cube(2, 5, 0.5)
    res = minimize(HOM, g, BoundaryDatum.affine(np.eye(2)), SolveOptions(multistart=1, seed=7))
    d = res.to_json()
    for key in ("energy", "r", "h", "datum", "sweeps", "seed", "wall_time_ms"):
        assert key in d
    assert d["seed"] == 7 and d["r"] == 2.0
    json.dumps(d)


def test_no_interior_raises():
    g = Grid(2, (2, 2), 1.0, np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        minimize(HOM, g, BoundaryDatum.affine(np.eye(2)))


@pytest.mark.parametrize("kw", [dict(gnc_schedule=()), dict(gnc_schedule=(1.0, 0.1)),
                                dict(gnc_schedule=(0.1, 1.0, 0.0)), dict(tol_energy=0.0),
                                dict(multistart=0), dict(smoothing_tail=(1e-3, 1e-2))])
def test_options_validation(kw):
    with pytest.raises(ValueError):
        SolveOptions(**kw)


def test_options_round_trip():
    o = SolveOptions(gnc_schedule=[1, 0.5, 0], seed=4)
    assert o.gnc_schedule == (1.0, 0.5, 0.0)
    assert SolveOptions(**{k: tuple(v) if isinstance(v, list) else v
                           for k, v in o.as_dict().items()}) == o


# --- brute-force oracle ------------------------------------------------------------------------

def test_brute_force_zero_free_nodes_is_datum():
    g = Grid(2, (2, 3), 0.5, np.eye(2), np.zeros(2))
    p = make_library_integrand("checkerboard")
    datum = BoundaryDatum.affine(sym_tensor(E1, E2))
    assert brute_force_min(p, g, datum, QUANT) == assemble_energy(apply_datum(g, datum), p)


def test_brute_force_limits():
    g = Grid.cube(2, 5, 0.5)
    with pytest.raises(ValueError):
        brute_force_min(HOM, g, BoundaryDatum.affine(np.eye(2)), QUANT)
    with pytest.raises(ValueError):
        brute_force_min(HOM, Grid.cube(2, 3, 0.5), BoundaryDatum.affine(np.eye(2)), np.arange(10.0))


@pytest.mark.parametrize("name", ["homogeneous_norm", "checkerboard", "laminate"])
@pytest.mark.parametrize("shape", [(3, 3), (4, 3), (4, 4)])
@pytest.mark.parametrize("kind", ["affine", "jump"])
def test_brute_force_dominance(name, shape, kind):
    p = make_library_integrand(name)
    g = Grid(2, shape, 0.5, np.eye(2), np.zeros(2))
    datum = (BoundaryDatum.affine(sym_tensor(E1, E1)) if kind == "affine"
             else BoundaryDatum.jump(np.array([0.0, 0.1]), E1, E2))
    opts = SolveOptions()
    m = minimize(p, g, datum, opts).energy
    b = brute_force_min(p, g, datum, QUANT)
    assert m >= b - quantization_gap(p, g, QUANT)
    assert m <= b + 10 * opts.tol_energy * max(1.0, b)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_upper_bound_contract(a, b, c):
    p = make_library_integrand("checkerboard")
    g = Grid.cube(2, 5, 0.5)
    datum = BoundaryDatum.affine(np.array([[a, c], [c, b]]))
    res = minimize(p, g, datum, SolveOptions(multistart=1))
    assert res.energy <= assemble_energy(apply_datum(g, datum), p)
    assert math.isfinite(res.energy) and res.energy >= 0
