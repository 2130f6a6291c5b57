from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdhomog.cell_formulas import estimate_f_lim
from bdhomog.integrands import make_library_integrand, sym_tensor
from bdhomog.solver import SolveOptions
from bdhomog.stochastic import (
    Law, Rectangle, check_covariance, check_subadditivity, ergodic_average, hash_uniform, mu,
    process_trials, random_partition, sample_field, stochastic_pair, validate_partition)

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
A11 = sym_tensor(E1, E1)
HOM = make_library_integrand("homogeneous_norm")
BERN = Law("bernoulli", 0.5, 1.0, 2.0)
FAST = SolveOptions(multistart=1)


# --- marks -------------------------------------------------------------------------------------

def test_hash_uniform_range_and_determinism():
    z = np.stack(np.meshgrid(np.arange(-8, 8), np.arange(-8, 8), indexing="ij"), -1)
    u = hash_uniform(7, z)
    assert u.shape == (16, 16)
    assert np.all((u >= 0) & (u < 1))
    assert np.array_equal(u, hash_uniform(7, z))
    # roughly uniform on a 256-cell window
    assert 0.35 < u.mean() < 0.65


def test_bernoulli_marks():
    f = sample_field(11, BERN)
    m = f.mark([[0, 0], [1, 0]])
    assert set(np.unique(m)) <= {1.0, 2.0}
    assert np.array_equal(m, sample_field(11, BERN).mark([[0, 0], [1, 0]]))


def test_seeds_differ():
    z = np.stack(np.meshgrid(np.arange(16), np.arange(16), indexing="ij"), -1)
    assert not np.array_equal(sample_field(1, BERN).mark(z), sample_field(2, BERN).mark(z))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 63 - 1), st.integers(-50, 50), st.integers(-50, 50),
       st.integers(-50, 50), st.integers(-50, 50))
def test_shift_covariance_of_marks(seed, a, b, x, y):
    f = sample_field(seed, BERN)
    g = f.shift_by((a, b))
    assert g.mark((x, y)) == f.mark((x + a, y + b))
    assert g.shift_by((-a, -b)).mark((x, y)) == f.mark((x, y))


def test_mark_at_uses_floor():
    f = sample_field(3, Law("uniform", a_min=1.0, a_max=3.0))
    assert f.mark_at([-0.5, 0.25]) == f.mark([-1, 0])
    assert 1.0 <= float(f.mark_at([2.7, 1.1])) <= 3.0


@pytest.mark.parametrize("d", [dict(kind="bernoulli", p=1.5), dict(kind="bernoulli", a_soft=3.0),
                               dict(kind="uniform", a_min=0.0), dict(kind="point", value=0.0),
                               dict(kind="gaussian")])
def test_law_validation(d):
    with pytest.raises(ValueError):
        Law.from_dict(d)


def test_law_round_trip_and_support():
    for law in (BERN, Law("uniform", a_min=0.5, a_max=1.5), Law("point", value=2.0)):
        assert Law.from_dict(law.as_dict()) == law
    assert BERN.support == (1.0, 2.0)
    assert Law("bernoulli", 0.0, 1.0, 2.0).support == (2.0, 2.0)
    assert Law("point", value=3.0).support == (3.0, 3.0)


def test_stochastic_pair_weights():
    f = sample_field(5, BERN)
    p = stochastic_pair(f, HOM)
    x = np.array([[0.5, 0.5], [3.2, -1.7]])
    A = np.broadcast_to(A11, (2, 2, 2))
    assert np.array_equal(p.f(x, A), f.mark_at(x) * 1.0)
    assert p.consts.c1 == 1.0 and p.consts.c3 == 2.0


# --- rectangles and partitions -----------------------------------------------------------------

def test_rectangle_basics():
    R = Rectangle((0, 0), (2, 1))
    assert R.volume == 2.0
    assert R.shifted((1, -1)) == Rectangle((1, -1), (3, 0))
    assert R.contains(Rectangle((0, 0), (1, 1)))
    assert R.intersection_volume(Rectangle((1, 0), (3, 3))) == 1.0
    assert R.grid(0.25).shape == (9, 5)
    with pytest.raises(ValueError):
        Rectangle((0, 0), (0, 1))


def test_partition_validation():
    R = Rectangle((0, 0), (2, 2))
    validate_partition(R, [R])
    quads = [Rectangle((i, j), (i + 1, j + 1)) for i in range(2) for j in range(2)]
    validate_partition(R, quads)
    with pytest.raises(ValueError):
        validate_partition(R, [])
    with pytest.raises(ValueError):
        validate_partition(R, quads[:3])
    with pytest.raises(ValueError):
        validate_partition(R, quads + [Rectangle((0, 0), (1, 1))])
    with pytest.raises(ValueError):
        validate_partition(R, [Rectangle((0, 0), (3, 2))])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_random_partition_is_exact(seed):
    rng = np.random.default_rng(seed)
    R = Rectangle((0, -1), (3, 2))
    parts = random_partition(R, rng, 0.125)
    validate_partition(R, parts)
    for P in parts:
        assert min(b - a for a, b in zip(P.lower, P.upper)) >= 1.0 - 1e-12


# --- the process ---------------------------------------------------------------------------------

def test_mu_homogeneous_law_is_jensen():
    f = sample_field(0, Law("bernoulli", 0.5, 1.5, 1.5))
    s = mu(f, HOM, A11, Rectangle((0, 0), (2, 1)), FAST, h=0.25)
    assert s.value == pytest.approx(1.5 * 2.0, rel=1e-9)
    assert s.bound_ok and s.normalized == pytest.approx(1.5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mu_unit_square_bounds(seed):
    s = mu(sample_field(seed, BERN), HOM, A11, Rectangle((0, 0), (1, 1)), FAST)
    assert 1.0 - 1e-12 <= s.value <= 2.0 + 1e-12
    assert s.bound_ok
    assert s.as_dict()["rectangle"] == {"lower": [0, 0], "upper": [1, 1]}


def test_covariance():
    rep = check_covariance(sample_field(9, BERN), HOM, A11, Rectangle((0, 0), (2, 1)), (1, 0),
                           h=0.25)
    assert rep["holds"] and rep["gap"] <= 2 * SolveOptions().tol_energy * rep["mu_shifted_field"]


def test_subadditivity_trivial_partition():
    R = Rectangle((0, 0), (1, 1))
    rep = check_subadditivity(sample_field(4, BERN), A11, R, [R], HOM, h=0.25)
    assert rep["slack"] == 0.0 and rep["holds"]


def test_subadditivity_homogeneous_is_additive():
    R = Rectangle((0, 0), (2, 2))
    quads = [Rectangle((i, j), (i + 1, j + 1)) for i in range(2) for j in range(2)]
    rep = check_subadditivity(sample_field(4, Law("point", value=1.0)), A11, R, quads, HOM,
                              FAST, h=0.25)
    assert abs(rep["slack"]) <= 1e-12 and rep["holds"]


def test_subadditivity_bernoulli():
    R = Rectangle((0, 0), (2, 2))
    quads = [Rectangle((i, j), (i + 1, j + 1)) for i in range(2) for j in range(2)]
    rep = check_subadditivity(sample_field(8, BERN), A11, R, quads, HOM, h=0.25)
    assert rep["holds"] and rep["bounds_ok"]
    assert rep["slack"] >= -4 * SolveOptions().tol_energy * rep["mu_whole"]


def test_process_trials_small():
    rep = process_trials(BERN, HOM, A11, n_trials=3, rng_seed=1, h=0.25, max_side=2)
    assert len(rep["trials"]) == 3
    assert rep["all_pass"]


# --- ergodic averaging -----------------------------------------------------------------------

def test_ergodic_needs_eight_seeds():
    with pytest.raises(ValueError):
        ergodic_average(BERN, A11, n_seeds=4)


def test_ergodic_degenerate_law_zero_std():
    rep = ergodic_average(Law("bernoulli", 0.5, 2.0, 2.0), A11, (1, 2, 3), n_seeds=8,
                          opts=FAST, cells_per_unit=8)
    assert rep["std"] == [0.0, 0.0, 0.0]
    assert rep["std_nonincreasing"] and rep["bounds_ok"]
    assert rep["mean"] == pytest.approx([2.0] * 3, rel=1e-12)


def test_one_point_law_reproduces_deterministic_record():
    rep = ergodic_average(Law("point", value=1.0), A11, (1, 2, 3), n_seeds=8, opts=FAST,
                          cells_per_unit=8)
    det = estimate_f_lim(HOM, A11, (1, 2, 3), opts=FAST, cells_per_unit=8)
    for rec in rep["records"]:
        assert rec.normalized_values == det.normalized_values


def test_ergodic_rows_layout():
    rep = ergodic_average(BERN, A11, (1, 2, 3), n_seeds=8, opts=FAST, cells_per_unit=8)
    assert len(rep["rows"]) == 24
    assert {row[0] for row in rep["rows"]} == set(range(8))
    assert rep["bounds_ok"] and rep["kind"] == "bulk"
    assert len(rep["mean"]) == len(rep["std"]) == 3
