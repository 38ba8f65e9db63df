import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varipath.discretize import PiecewiseConstantControl, objective_P
from varipath.estimator import (
    EstimatorOptions,
    _Lambda0_fn,
    _Lambda1_fn,
    _KL_fn,
    _sigma_fn,
    compute_all,
    compute_c,
    compute_ell,
    compute_eta,
    compute_gamma_bar,
    compute_KL,
    compute_r0,
    compute_sigma_bar,
    compute_varrho,
    lemma1_margin,
    max_over_omega,
    rh_holds,
    select_T0_beta,
)
from varipath.model import CoercivityFn, LagrangianSpec

from conftest import FAMILY_CASES, make_problem

Q1 = LagrangianSpec("quad1", (), 1)


# -- r0 ----------------------------------------------------------------------


def test_r0_when_theta_dominates_identity():
    assert compute_r0(CoercivityFn("affine_power", (1.0, 0.5, 2.0))) == 0.0


def test_r0_for_pure_square():
    assert compute_r0(lambda r: r * r) == 1.0


def test_r0_fails_for_sublinear_growth():
    with pytest.raises(ValueError):
        compute_r0(CoercivityFn("log1p", ()))


# -- c -----------------------------------------------------------------------


def test_c_for_quad1_with_unit_endpoint():
    assert compute_c(make_problem(a=[1.0]), 0.0) == pytest.approx(5.0 / 3.0, abs=1e-13)


def test_c_for_quad1_with_zero_endpoint():
    p = make_problem(A=[[1.0]], b=[10.0], a=[0.0])
    assert compute_c(p, 0.0) == pytest.approx(1.0, abs=1e-14)


def test_c_for_constant_lagrangian():
    p = make_problem("power", (1.0, 0.0, 0.0, 2, 0.0), A=[[1.0]], b=[10.0], a=[0.0])
    assert compute_c(p, 2.0) == pytest.approx(3.0, abs=1e-14)


# -- Lambda0, Lambda1, sigma -------------------------------------------------

C = 5.0 / 3.0


def test_lambda0_lambda1_quad1_analytic_and_grid():
    b = Q1.bounds
    assert b.Lambda0(C) == pytest.approx(43.0 / 18.0, abs=1e-14)
    assert b.Lambda1(C) == 0.0
    zero = ("fixed", np.zeros(1))
    assert max_over_omega(_Lambda0_fn(Q1), C, 1, zero, safety=0.0) == pytest.approx(43.0 / 18.0, abs=1e-12)
    assert max_over_omega(_Lambda1_fn(Q1), C, 1, zero, safety=0.0) == 0.0


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 7.5])
def test_sigma_quad1(r):
    assert Q1.bounds.sigma(r, C) == pytest.approx(0.5 * r * r - 1.0, abs=1e-13)
    g = max_over_omega(_sigma_fn(Q1), C, 1, ("ball", r), safety=0.0)
    assert g == pytest.approx(0.5 * r * r - 1.0, abs=1e-12)


def test_safety_inflates_grid_maxima():
    zero = ("fixed", np.zeros(1))
    raw = max_over_omega(_Lambda0_fn(Q1), C, 1, zero, safety=0.0)
    assert max_over_omega(_Lambda0_fn(Q1), C, 1, zero, safety=0.05) == pytest.approx(1.05 * raw)


@pytest.mark.parametrize("family,params,n", FAMILY_CASES)
def test_grid_refinement_changes_maxima_less_than_safety(family, params, n):
    L = LagrangianSpec(family, tuple(params), n)
    grid = 9 if n == 2 else 41
    for f, dom in [
        (_Lambda0_fn(L), ("fixed", np.zeros(n))),
        (_Lambda1_fn(L), ("fixed", np.zeros(n))),
        (_sigma_fn(L), ("ball", 3.0)),
        (_KL_fn(L), ("ball", 2.0)),
    ]:
        coarse = max_over_omega(f, 2.0, n, dom, grid, 0.0)
        fine = max_over_omega(f, 2.0, n, dom, 2 * grid - 1, 0.0)
        assert abs(fine - coarse) <= 0.05 * abs(coarse) + 1e-12


def test_sigma_nondecreasing_and_above_quadratic_minorant():
    rs = np.linspace(0.0, 20.0, 41)
    vals = [max_over_omega(_sigma_fn(Q1), C, 1, ("ball", r), safety=0.0) for r in rs]
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(np.array(vals) >= 0.5 * rs**2 - 43.0 / 18.0 - 1e-12)


# -- T0 / beta ---------------------------------------------------------------


def test_T0_any_admissible_for_quad1():
    p = make_problem()
    sigma = lambda r: 0.5 * r * r - 1.0
    grid = np.linspace(0.03, 0.97, 32)
    for T0 in grid:
        assert sigma((C + 1.0) / T0) > 0.0
    T0, beta = select_T0_beta(p, C, sigma, grid=tuple(grid))
    assert 0.0 < T0 < 1.0 and beta > 0.0


def test_T0_respects_growth_floor():
    p = make_problem()
    object.__setattr__(p.reg, "delta", 5.0)
    sigma = lambda r: r
    with pytest.raises(ValueError):
        select_T0_beta(p, 1.0, sigma, grid=tuple(np.linspace(0.4, 0.97, 20)))
    T0, beta = select_T0_beta(p, 1.0, sigma, grid=tuple(np.linspace(0.03, 0.97, 32)))
    assert T0 < 0.4 and beta > 5.0


def test_T0_fails_when_sigma_vanishes():
    with pytest.raises(ValueError):
        select_T0_beta(make_problem(), C, lambda r: 0.0)


# -- eta, gamma_bar ----------------------------------------------------------

TH = CoercivityFn("affine_power", (1.0, 0.5, 2.0))


def test_eta_examples():
    assert compute_eta(TH, 0.0) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-9)
    assert compute_eta(TH, 3.0) == pytest.approx(1.0 / math.sqrt(8.0), rel=1e-9)


@pytest.mark.parametrize("beta", [0.25, 1.0, 9.0])
def test_eta_pure_square(beta):
    assert compute_eta(lambda r: r * r, beta) == pytest.approx(1.0 / (2.0 * math.sqrt(beta)), rel=1e-9)


def test_gamma_bar_closed_form():
    assert compute_gamma_bar(0.5, 2.0, 1.0, 0.5, 2.0) == math.exp(0.5 * 2.0 * (1.0 + 0.5 * 2.0))


# -- varrho, ell -------------------------------------------------------------


def test_varrho_degenerate_rejected():
    with pytest.raises(ValueError):
        compute_varrho(1.0, 0.0, 0.0, 0.0, 0.0)


def test_varrho_example_and_rh_check():
    rho = compute_varrho(2.0, 1.0, 0.0, 1.0, 1.0)
    assert rho == pytest.approx(2.0, rel=1e-8)
    assert rh_holds(rho * (1 + 1e-6), 2.0, 1.0, 0.0, 1.0, 1.0)
    assert not rh_holds(rho * (1 - 1e-3), 2.0, 1.0, 0.0, 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.1, 5),
    st.floats(0, 10),
    st.floats(0, 5),
    st.floats(0, 20),
    st.floats(0.01, 10),
)
def test_rh_holds_just_above_varrho(mu, L0, L1, L2, beta):
    rho = compute_varrho(mu, L0, L1, L2, beta)
    if rho > 0:
        assert rh_holds(rho * (1 + 1e-6), mu, L0, L1, L2, beta)
        assert not rh_holds(rho * (1 - 1e-3), mu, L0, L1, L2, beta)
    for r in np.geomspace(max(rho, 1e-6) * (1 + 1e-6), 1e6, 25):
        assert rh_holds(r, mu, L0, L1, L2, beta)


def test_ell_examples():
    assert compute_ell(5.0, 1.0, 0.0, 0.0, 0.0) == 5.0
    assert compute_ell(0.0, 2.0, 4.0, 0.0, 0.0) == pytest.approx(math.sqrt(8.0), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50), st.floats(0.1, 5), st.floats(0, 10), st.floats(0, 5), st.floats(0, 10), st.floats(0, 10))
def test_ell_monotone_in_beta(rho, mu, L0, L1, beta, extra):
    assert compute_ell(rho, mu, L0, L1, beta + extra) >= compute_ell(rho, mu, L0, L1, beta)


# -- K_L, sigma_bar ----------------------------------------------------------


def test_KL_examples():
    K, _ = compute_KL(Q1, 2.0)
    assert K == pytest.approx(math.sqrt(8.0), rel=1e-15)
    Kg, prov = compute_KL(Q1, 2.0, safety=0.0, use_analytic=False)
    assert Kg == pytest.approx(math.sqrt(8.0), rel=1e-12)
    assert prov["method"] == "grid"
    const = LagrangianSpec("power", (1.0, 0.0, 0.0, 2, 0.0), 1)
    assert compute_KL(const, 3.0, use_analytic=False)[0] == 0.0


@pytest.mark.parametrize("family,params,n", FAMILY_CASES)
def test_KL_nondecreasing_in_ell(family, params, n):
    L = LagrangianSpec(family, tuple(params), n)
    ks = [compute_KL(L, e, grid=15, safety=0.0, use_analytic=False)[0] for e in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(ks, ks[1:]))


def test_sigma_bar_examples():
    assert compute_sigma_bar(Q1, math.sqrt(8.0), 2.0) == pytest.approx(1.0 + 5.0 * math.sqrt(8.0), rel=1e-15)
    assert compute_sigma_bar(Q1, 0.0, 2.0) == 1.0


# -- compute_all -------------------------------------------------------------


def test_compute_all_benchmark(bench, bench_consts):
    k = bench_consts
    assert k.r0 == 0.0
    assert k.c == pytest.approx(5.0 / 3.0, abs=1e-12)
    assert k.Lambda1 == 0.0
    assert k.Lambda0 == pytest.approx(43.0 / 18.0, abs=1e-12)
    assert k.beta > k.delta / k.xi
    assert 0.0 < k.T0 < 1.0
    assert k.gamma_bar == math.exp(k.eta * k.xi * (k.c + k.T0 * k.beta))
    assert k.ell == compute_ell(k.varrho, k.mu, k.Lambda0, k.Lambda1, k.beta)
    assert k.ell == max(
        k.varrho,
        math.sqrt(2.0 / k.mu * (k.Lambda0 + k.beta)),
        (k.Lambda1 + math.sqrt(k.Lambda1**2 + 4 * k.mu * k.Lambda0)) / 2.0,
    )
    assert set(k.provenance) >= {"r0", "c", "Lambda0", "Lambda1", "beta", "Lambda2", "ell", "K_L", "sigma_bar"}


def test_compute_all_is_bit_identical(bench):
    a = compute_all(bench[0], EstimatorOptions(use_analytic=False, grid=21)).to_dict()
    b = compute_all(bench[0], EstimatorOptions(use_analytic=False, grid=21)).to_dict()
    assert a == b


def test_grid_constants_dominate_analytic(bench, bench_consts):
    g = compute_all(bench[0], EstimatorOptions(use_analytic=False, grid=21))
    assert g.Lambda0 >= bench_consts.Lambda0
    assert g.provenance["Lambda0"]["method"] == "grid"


def test_sigma_bar_dominates_objective_on_box(bench, bench_consts):
    rng = np.random.default_rng(5)
    ell = bench_consts.ell
    for _ in range(100):
        N = int(rng.integers(1, 40))
        u = PiecewiseConstantControl(rng.uniform(-ell, ell, (N, 1)), ell)
        assert objective_P(u, bench[0].lagrangian) <= bench_consts.sigma_bar


def _family_problem(family, params, n):
    A = np.zeros((1, n))
    A[0, 0] = -1.0
    a = np.zeros(n)
    a[0] = 1.0
    return make_problem(family, params, n, A=A, b=[-1.0], a=a)


@pytest.mark.parametrize("family,params,n", FAMILY_CASES)
def test_lemma1_on_random_samples(family, params, n):
    p = _family_problem(family, params, n)
    k = compute_all(p)
    rng = np.random.default_rng(6)
    m = 1000
    t = rng.random(m)
    d = rng.standard_normal((m, n))
    x = d / np.linalg.norm(d, axis=1, keepdims=True) * (k.c * rng.random((m, 1)))
    u = rng.uniform(-10 * k.ell, 10 * k.ell, (m, n))
    assert np.min(lemma1_margin(p, k, t, x, u)) >= 0.0
