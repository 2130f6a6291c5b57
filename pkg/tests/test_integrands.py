from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdhomog.integrands import (
    LIBRARY, IntegrandPair, StructuralConstants, SurfaceIntegrand, check_integrand,
    constant_weight, decomposable, default_sample_plan, frob, g_infinity_estimate,
    linear_profile, make_library_integrand, quadratic_pair, recession_estimate, recession_pair,
    rescale_pair, sym_matrix, sym_tensor, two_slope_profile)

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def _pairs():
    return [make_library_integrand(n) for n in LIBRARY]


# --- symmetric tensors -------------------------------------------------------------------

@pytest.mark.parametrize("a,b,expected", [
    (E1, E1, [[1, 0], [0, 0]]),
    (E1, E2, [[0, 0.5], [0.5, 0]]),
    ([1, 1], [1, 0], [[1, 0.5], [0.5, 0]]),
])
def test_sym_tensor_examples(a, b, expected):
    assert np.array_equal(sym_tensor(np.asarray(a, float), np.asarray(b, float)), expected)


def test_sym_tensor_dimension_mismatch():
    with pytest.raises(ValueError):
        sym_tensor(np.ones(2), np.ones(3))


def test_sym_matrix_symmetrizes_exactly():
    M = sym_matrix([[1.0, 2.0], [0.0, 3.0]])
    assert M[0, 1] == M[1, 0] == 1.0


vec2 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=2).map(np.array)


@given(vec2, vec2)
def test_sym_tensor_symmetric_and_commutative(a, b):
    T = sym_tensor(a, b)
    assert np.array_equal(T, T.T)
    assert np.array_equal(T, sym_tensor(b, a))


@given(vec2, vec2)
def test_sym_tensor_is_decomposable(a, b):
    assert bool(decomposable(sym_tensor(a, b)))


def test_identity_is_not_decomposable():
    assert not bool(decomposable(np.eye(2)))
    assert bool(decomposable(np.diag([1.0, -1.0])))


def test_constants_validation():
    with pytest.raises(ValueError):
        StructuralConstants(c1=2.0, c3=1.0)
    with pytest.raises(ValueError):
        StructuralConstants(alpha=1.0)
    with pytest.raises(ValueError):
        StructuralConstants(c6=-1.0)


# --- recession estimates ------------------------------------------------------------------

def test_recession_of_norm_is_exact():
    p = make_library_integrand("homogeneous_norm")
    rep = recession_estimate(p.f, np.zeros(2), np.eye(2))
    assert rep["value"] == pytest.approx(math.sqrt(2), rel=1e-15)
    assert max(rep["deviation"]) <= 4 * np.finfo(float).eps
    assert not rep["violated"]


def test_recession_of_smooth_profile():
    p = make_library_integrand("smooth_nonhomogeneous")
    A = sym_tensor(E1, E1)
    rep = recession_estimate(p.f, np.zeros(2), A, t_grid=[1, 10, 100, 1e3, 1e4])
    assert abs(rep["value"] - 1.0) <= 1e-4
    assert not rep["violated"]


def test_recession_of_checkerboard():
    p = make_library_integrand("checkerboard")
    x = np.array([0.25, 0.25])
    rep = recession_estimate(p.f, x, np.eye(2))
    assert rep["value"] == pytest.approx(float(p.f.weight(x)) * math.sqrt(2), rel=1e-15)


def test_g_infinity_examples():
    p = make_library_integrand("homogeneous_norm")
    z, n = np.array([1.0, 2.0]), E2
    assert g_infinity_estimate(p.g, np.zeros(2), z, n)["value"] == pytest.approx(
        float(frob(sym_tensor(z, n))), rel=1e-15)
    assert g_infinity_estimate(p.g, np.zeros(2), np.zeros(2), n)["value"] == 0.0

    c = StructuralConstants(c1=1.0, c3=2.0, c7=1.0)

    def g_eval(x, zeta, nu):
        s = frob(sym_tensor(zeta, nu))
        return np.minimum(s, 1.0) + s

    g = SurfaceIntegrand(g_eval, lambda x, zeta, nu: frob(sym_tensor(zeta, nu)), c)
    rep = g_infinity_estimate(g, np.zeros(2), z, n)
    s = float(frob(sym_tensor(z, n)))
    assert 0.0 <= rep["value"] - s <= 1.0 / max(rep["t"]) + 1e-12
    for t, dev in zip(rep["t"], rep["deviation"]):
        assert dev <= 1.0 / t + 1e-12


# --- condition checker ---------------------------------------------------------------------

@pytest.mark.parametrize("name", [n for n in LIBRARY])
def test_library_pairs_pass(name):
    rep = check_integrand(make_library_integrand(name))
    assert rep["all_pass"], rep["failed"]


def test_smooth_pair_with_c6_2_passes_f4():
    p = make_library_integrand("smooth_nonhomogeneous", c6=2.0)
    assert check_integrand(p)["conditions"]["f4"]["pass"]


def test_quadratic_is_rejected_at_norm_2():
    rep = check_integrand(quadratic_pair())
    assert not rep["all_pass"]
    f2 = rep["conditions"]["f2_upper"]
    assert not f2["pass"]
    assert 2.0 in f2["violating_norms"]


def test_sample_plan_is_deterministic():
    a, b = default_sample_plan(seed=3), default_sample_plan(seed=3)
    assert np.array_equal(a.As, b.As) and np.array_equal(a.xs, b.xs)


# --- rescaling -----------------------------------------------------------------------------

def test_rescale_homogeneous_is_identity():
    p = make_library_integrand("homogeneous_norm")
    pe = rescale_pair(p, 0.3)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 2))
    A = sym_matrix(rng.normal(size=(20, 2, 2)))
    z, n = rng.normal(size=(20, 2)), np.tile(E2, (20, 1))
    assert np.allclose(pe.f(x, A), p.f(x, A), rtol=1e-15)
    assert np.allclose(pe.g(x, z, n), p.g(x, z, n), rtol=1e-14)


def test_rescale_checkerboard_substitution():
    p = make_library_integrand("checkerboard")
    pe = rescale_pair(p, 0.5)
    x, A = np.array([0.25, 0.0]), np.eye(2)
    assert float(pe.f(x, A)) == float(p.f.weight(np.array([0.5, 0.0]))) * math.sqrt(2)


def test_rescale_bounded_surface_term():
    c = StructuralConstants()
    g = SurfaceIntegrand.from_radial(constant_weight(1.0), two_slope_profile(1.0, 1.0, 0.0), c)
    f = make_library_integrand("homogeneous_norm").f
    p = IntegrandPair(f, g)
    ge = rescale_pair(p, 0.1).g
    zeta = np.array([0.05, 0.0])
    assert float(ge(np.zeros(2), zeta, E1)) == pytest.approx(0.05, rel=1e-14)


def test_rescale_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        rescale_pair(make_library_integrand("laminate"), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([0.5, 0.25, 0.125]), st.sampled_from([0.5, 0.25]),
       st.sampled_from(["checkerboard", "laminate", "smooth_nonhomogeneous"]))
def test_rescale_composition(e1, e2, name):
    p = make_library_integrand(name)
    once = rescale_pair(p, e1 * e2)
    twice = rescale_pair(rescale_pair(p, e1), e2)
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, size=(25, 2))
    A = sym_matrix(rng.normal(size=(25, 2, 2)))
    z = rng.normal(size=(25, 2))
    nu = np.tile(E2, (25, 1))
    assert np.allclose(once.f(x, A), twice.f(x, A), rtol=1e-13)
    assert np.allclose(once.g(x, z, nu), twice.g(x, z, nu), rtol=1e-13)


def test_recession_pair_is_homogeneous():
    p = recession_pair(make_library_integrand("smooth_nonhomogeneous"))
    A = sym_tensor(E1, E2)
    assert float(p.f(np.zeros(2), 3 * A)) == pytest.approx(3 * float(p.f(np.zeros(2), A)), rel=1e-15)


# --- library -----------------------------------------------------------------------------

def test_laminate_values_on_half_periods():
    p = make_library_integrand("laminate", a_soft=1.0, a_hard=2.0, direction=0)
    x = np.array([[0.25, 0.3], [0.75, 0.3], [1.25, -4.0], [-0.25, 0.0]])
    assert p.f.weight(x).tolist() == [1.0, 2.0, 1.0, 2.0]


def test_hyperplane_surface_pair():
    p = make_library_integrand("hyperplane_weak_surface", c1=1.0, c3=2.0)
    z = np.array([1.0, 0.0])
    s = float(frob(sym_tensor(z, E2)))
    assert float(p.g(np.array([0.3, 0.0]), z, E2)) == pytest.approx(1.0 * s)
    assert float(p.g(np.array([0.3, 0.1]), z, E2)) == pytest.approx(2.0 * s)
    assert float(p.f(np.array([0.3, 0.0]), np.eye(2))) == pytest.approx(2.0 * math.sqrt(2))


@pytest.mark.parametrize("name,params", [
    ("nonexistent", {}),
    ("laminate", {"a_soft": 0.0}),
    ("checkerboard", {"a_soft": 3.0, "a_hard": 2.0}),
    ("hyperplane_weak_surface", {"c1": 3.0, "c3": 1.0}),
])
def test_library_errors(name, params):
    with pytest.raises(ValueError):
        make_library_integrand(name, params)


# --- properties on random samples ------------------------------------------------------------

sym2 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(
    lambda v: np.array([[v[0], v[2]], [v[2], v[1]]]))
pt2 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=2).map(np.array)
unit2 = st.floats(0, 2 * math.pi).map(lambda t: np.array([math.cos(t), math.sin(t)]))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(LIBRARY), pt2, sym2, sym2)
def test_bulk_bounds_and_lipschitz(name, x, A, B):
    p = make_library_integrand(name)
    c = p.consts
    fA, fB = float(p.f(x, A)), float(p.f(x, B))
    nA = float(frob(A))
    assert c.c1 * nA - c.c2 <= fA * (1 + 1e-12) + 1e-12
    assert fA <= (c.c3 * nA + c.c4) * (1 + 1e-12) + 1e-12
    assert abs(fA - fB) <= c.c5 * float(frob(A - B)) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(LIBRARY), pt2, vec2, vec2, unit2)
def test_surface_symmetry_bounds_lipschitz(name, x, z1, z2, nu):
    p = make_library_integrand(name)
    c = p.consts
    g1 = float(p.g(x, z1, nu))
    assert g1 == float(p.g(x, -z1, -nu))
    s = float(frob(sym_tensor(z1, nu)))
    assert c.c1 * s <= g1 * (1 + 1e-12) + 1e-12
    assert g1 <= c.c3 * s * (1 + 1e-12) + 1e-12
    g2 = float(p.g(x, z2, nu))
    assert abs(g1 - g2) <= c.sigma1 * float(np.linalg.norm(z1 - z2)) * (1 + 1e-12) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(LIBRARY), pt2, sym2, st.floats(0.01, 100))
def test_f4_trivial_at_equal_scales(name, x, A, s):
    p = make_library_integrand(name)
    c = p.consts
    fs = float(p.f(x, s * A))
    rhs = 2 * (c.c6 / s * fs ** (1 - c.alpha) + c.c6 / s)
    assert 0.0 <= rhs


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["homogeneous_norm", "laminate", "checkerboard"]), pt2, sym2,
       st.floats(1.5, 1e3))
def test_homogeneous_recession_has_zero_deviation(name, x, A, t):
    p = make_library_integrand(name)
    rep = recession_estimate(p.f, x, A, t_grid=[1.0, t, 1e4])
    assert max(rep["deviation"]) <= 1e-12 * max(1.0, float(p.f(x, A)))
