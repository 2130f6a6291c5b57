from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from bdhomog.cell_formulas import (
    CellProblem, canonical_jump, cell_value, check_gj_identity, check_scaling_identity,
    check_surface_scaling, estimate_f_lim, estimate_g_lim, gamma_minima_check,
    monotone_comparison, plateau, record_bound_violations, surface_scaling_constant)
from bdhomog.integrands import frob, make_library_integrand, sym_tensor
from bdhomog.lattice import BoundaryDatum
from bdhomog.solver import SolveOptions

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
DIAG = np.array([1.0, 1.0]) / math.sqrt(2)
HOM = make_library_integrand("homogeneous_norm")
FAST = SolveOptions(multistart=1)


def test_canonical_jump():
    z, n = canonical_jump(E1, -E2)
    assert np.array_equal(z, -E1) and np.array_equal(n, E2)
    z, n = canonical_jump(E1, E2)
    assert np.array_equal(z, E1) and np.array_equal(n, E2)
    z, n = canonical_jump(E2, np.array([1.0, -0.0]))
    assert np.array_equal(n, np.array([1.0, -0.0]))


@pytest.mark.parametrize("vals,tol,expected", [
    ([1.0, 1.0, 1.0], 0.01, True), ([2.0, 1.0, 1.005, 1.0], 0.01, True),
    ([1.0, 1.05, 1.0], 0.01, False), ([1.0, 1.0], 0.01, False), ([0.0, 0.0, 0.0], 0.01, True)])
def test_plateau(vals, tol, expected):
    assert plateau(vals, tol) is expected


def test_cell_value_resolution_guard():
    cp = CellProblem(HOM, BoundaryDatum.affine(np.eye(2)), 1.0, cells_per_unit=4)
    with pytest.raises(ValueError):
        cell_value(cp)


def test_schedule_validation():
    with pytest.raises(ValueError):
        estimate_f_lim(HOM, np.eye(2), (4, 8))
    with pytest.raises(ValueError):
        estimate_f_lim(HOM, np.eye(2), (4, 8, 8))


@pytest.mark.parametrize("A", [sym_tensor(E1, E1), np.eye(2), sym_tensor(E1, E2)])
def test_f_lim_homogeneous_is_constant(A):
    rec = estimate_f_lim(HOM, A, (4, 8, 16), opts=FAST, cells_per_unit=2)
    nA = float(frob(A))
    assert all(abs(v - nA) <= 1e-9 * nA for v in rec.normalized_values)
    assert rec.plateau_flag and rec.extrapolated == rec.normalized_values[-1]
    assert record_bound_violations(rec, HOM) == []


@pytest.mark.parametrize("nu", [E2, DIAG])
def test_g_lim_homogeneous_band(nu):
    rec = estimate_g_lim(HOM, E1, nu, (4, 8, 16), opts=FAST, cells_per_unit=2)
    s = float(frob(sym_tensor(E1, nu)))
    for r, h, v in zip(rec.r_values, rec.h_values, rec.normalized_values):
        assert s * (1 - 5 * h / r) <= v <= s * (1 + 5 * h / r)
    assert record_bound_violations(rec, HOM) == []


def test_g_lim_homogeneity_and_symmetry():
    p = make_library_integrand("checkerboard")
    kw = dict(r_schedule=(4, 6, 8), opts=FAST, cells_per_unit=2)
    base = estimate_g_lim(p, E1, E2, **kw)
    double = estimate_g_lim(p, 2 * E1, E2, **kw)
    flipped = estimate_g_lim(p, -E1, -E2, **kw)
    for a, b in zip(base.normalized_values, double.normalized_values):
        assert abs(b - 2 * a) <= 1e-9 * abs(2 * a)
    assert flipped.normalized_values == base.normalized_values


def test_record_serialization(tmp_path):
    rec = estimate_f_lim(HOM, np.eye(2), (4, 8, 16), opts=FAST, cells_per_unit=2)
    path = tmp_path / "rec.csv"
    rec.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["r", "h", "normalized_value", "wall_time_ms"]
    assert len(rows) == 4
    js = rec.to_json()
    assert js["kind"] == "bulk" and len(js["normalized_values"]) == 3
    assert rec.to_svg().startswith("<svg")


def test_f_lim_record_bounds_checkerboard():
    p = make_library_integrand("checkerboard")
    rec = estimate_f_lim(p, sym_tensor(E1, E1), (2, 3, 4), opts=FAST, cells_per_unit=4)
    assert record_bound_violations(rec, p) == []


def test_f_lim_lipschitz_in_A():
    p = make_library_integrand("checkerboard")
    A1, A2 = sym_tensor(E1, E1), 1.25 * sym_tensor(E1, E1)
    kw = dict(r_schedule=(2, 3, 4), opts=FAST, cells_per_unit=4)
    v1 = estimate_f_lim(p, A1, **kw).extrapolated
    v2 = estimate_f_lim(p, A2, **kw).extrapolated
    assert abs(v1 - v2) <= p.consts.c5 * float(frob(A1 - A2)) + 2 * 0.01 * max(v1, v2)


# --- exact identities ----------------------------------------------------------------------

def test_scaling_identity_homogeneous():
    rep = check_scaling_identity(HOM, sym_tensor(E1, E1), 0.5, opts=FAST)
    assert rep["rel_gap"] == 0.0


def test_scaling_identity_eps_one():
    p = make_library_integrand("checkerboard")
    rep = check_scaling_identity(p, sym_tensor(E1, E1), 1.0, opts=FAST)
    assert rep["rel_gap"] == 0.0


def test_scaling_identity_checkerboard():
    p = make_library_integrand("checkerboard")
    opts = SolveOptions()
    rep = check_scaling_identity(p, sym_tensor(E1, E1), 0.5, opts=opts)
    assert rep["rel_gap"] <= 1e-6 + 2 * opts.tol_energy
    assert rep["transfer_rel_gap"] <= 1e-12


def test_scaling_identity_incommensurate():
    p = make_library_integrand("checkerboard")
    with pytest.raises(ValueError):
        check_scaling_identity(p, sym_tensor(E1, E1), 0.5, n_cells=5)


def test_surface_scaling_homogeneous_is_exact():
    rep = check_surface_scaling(HOM, E1, E2, 0.25, n_cells=9, opts=FAST)
    assert rep["difference"] <= 1e-12 * max(rep["lhs"], 1.0)
    assert rep["holds"]


def test_surface_scaling_bound_smooth():
    p = make_library_integrand("smooth_nonhomogeneous")
    rep = check_surface_scaling(p, E1, E2, 0.125, n_cells=9, opts=FAST)
    assert rep["holds"] and rep["margin"] > 0
    assert rep["C"] == surface_scaling_constant(p, E1)


def test_surface_scaling_guards():
    with pytest.raises(ValueError):
        check_surface_scaling(HOM, E1, E2, 0.25, n_cells=8)
    p = make_library_integrand("smooth_nonhomogeneous")
    with pytest.raises(ValueError):
        check_surface_scaling(p, E1, E2, 1.0 / (2 * p.consts.c6), n_cells=9)


def test_gj_identity_zero_and_homogeneous():
    rep = check_gj_identity(HOM, [(np.zeros(2), E2), (E1, E2)], r_schedule=(4, 8, 16),
                            opts=FAST, cells_per_unit=2)
    zero, flat = rep["samples"]
    assert zero["g_lim"] == 0.0 and zero["f_inf_lim"] == 0.0
    h = flat["g_record"]["h_values"][-1]
    assert flat["rel_gap"] <= 5 * h / 16


def test_gamma_minima_homogeneous_constant():
    rep = gamma_minima_check(HOM, (0.5, 0.25), opts=FAST, cells_per_period=4,
                             limit_r_schedule=(2, 3, 4))
    m = rep["minima"]
    assert m[0] == pytest.approx(m[1], rel=1e-12)
    assert rep["limit_minimum"] == pytest.approx(1.0, rel=1e-9)


def test_gamma_minima_jump_homogeneous():
    datum = BoundaryDatum.jump(np.zeros(2), E1, E2)
    rep = gamma_minima_check(HOM, (0.5, 0.25), datum=datum, opts=FAST, cells_per_period=8,
                             limit_r_schedule=(2, 3, 4))
    s = float(frob(sym_tensor(E1, E2)))
    for m in rep["minima"]:
        assert m == pytest.approx(s, rel=1e-9)


def test_gamma_requires_decreasing_eps():
    with pytest.raises(ValueError):
        gamma_minima_check(HOM, (0.25, 0.5))


def test_monotone_comparison():
    p = make_library_integrand("checkerboard")
    rep = monotone_comparison(p, sym_tensor(E1, E1), 2.0, 3.0, opts=FAST, cells_per_unit=4)
    assert rep["holds"]
