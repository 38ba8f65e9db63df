import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varipath.barrier import Barrier, BarrierPoint, barrier_eval, local_norm, newton_step, spd_factor
from varipath.discretize import objective_P
from varipath.errors import DomainError, FactorizationError

from conftest import make_problem


def small_barrier(N=4, literal=False):
    # benchmark data with a tight box and cap so random points are informative
    return Barrier(make_problem(), 3.0, 50.0, N, literal_endpoint=literal)


def random_interior(bar, rng):
    while True:
        u = rng.uniform(0.2, 2.6, bar.N * bar.n)
        if np.all(bar.b - bar.E @ u > 1e-3):
            break
    P = objective_P(bar.control(u), bar.L, bar.quad)
    sigma = P + (bar.sigma_bar - P) * rng.uniform(0.05, 0.95)
    return np.append(u, sigma)


def fd_grad(f, z, h=1e-6):
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def test_value_example():
    p = make_problem(A=[[-1.0]], b=[1.0], a=[0.0])
    bar = Barrier(p, 2.0, 10.0, 1)
    assert bar.value(np.array([0.0, 2.0])) == pytest.approx(-math.log(8.0) - math.log(4.0), abs=1e-14)


def test_barrier_eval_wrapper_matches_class():
    p = make_problem(A=[[-1.0]], b=[1.0], a=[0.0])

    class K:
        ell, sigma_bar = 2.0, 10.0

    ev = barrier_eval(BarrierPoint(np.array([0.3, -0.2]), 3.0), p, K)
    ref = Barrier(p, 2.0, 10.0, 2).evaluate(np.array([0.3, -0.2, 3.0]))
    assert ev.value == ref.value
    np.testing.assert_array_equal(ev.hess, ref.hess)


@pytest.mark.parametrize("literal", [False, True])
def test_derivatives_match_finite_differences(literal):
    rng = np.random.default_rng(0)
    bar = small_barrier(N=3, literal=literal)
    if literal:
        bar = Barrier(make_problem(A=[[-1.0]], b=[-1.0]), 3.0, 50.0, 3, literal_endpoint=True)
    for _ in range(100):
        z = random_interior(bar, rng)
        ev = bar.evaluate(z)
        g = fd_grad(bar.value, z)
        assert np.max(np.abs(ev.grad - g)) <= 1e-6 * max(1.0, np.max(np.abs(ev.grad)))
        H = np.array([fd_grad(lambda w, i=i: bar.evaluate(w, hessian=False).grad[i], z) for i in range(z.size)])
        assert np.max(np.abs(ev.hess - H)) <= 1e-4 * max(1.0, np.max(np.abs(ev.hess)))


def test_hessian_symmetric():
    bar = small_barrier(N=6)
    z = random_interior(bar, np.random.default_rng(1))
    H = bar.evaluate(z).hess
    assert np.array_equal(H, H.T)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_midpoint_convexity(seed):
    rng = np.random.default_rng(seed)
    bar = small_barrier(N=3)
    z1, z2 = random_interior(bar, rng), random_interior(bar, rng)
    mid = 0.5 * (z1 + z2)
    assert bar.value(mid) <= 0.5 * (bar.value(z1) + bar.value(z2)) + 1e-12


def test_value_blows_up_toward_epigraph():
    bar = small_barrier(N=2)
    u = np.array([1.5, 1.5])
    P = objective_P(bar.control(u), bar.L, bar.quad)
    vals = [bar.value(np.append(u, P + d)) for d in (1e-1, 1e-3, 1e-6, 1e-9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError) as info:
        bar.value(np.append(u, P))
    assert info.value.group == "epigraph"


@pytest.mark.parametrize(
    "group,path",
    [
        ("cap", lambda s: np.array([1.5, 1.5, 50.0 - s])),
        ("endpoint", lambda s: np.array([1.0 + s, 1.0 + s, 20.0])),
        ("box", lambda s: np.array([3.0 - s, 1.5, 20.0])),
    ],
)
def test_value_blows_up_toward_each_boundary(group, path):
    bar = small_barrier(N=2)
    vals = [bar.value(path(s)) for s in (1e-1, 1e-3, 1e-6, 1e-9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError) as info:
        bar.value(path(0.0))
    assert info.value.group == group
    assert not bar.contains(path(0.0))


def test_literal_endpoint_drops_tau():
    a, b = small_barrier(N=4), small_barrier(N=4, literal=True)
    np.testing.assert_allclose(b.E, 4 * a.E)


def test_local_norm_examples():
    assert local_norm([1.0, 0.0], np.eye(2)) == 1.0
    assert local_norm([2.0], np.array([[4.0]])) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_local_norm_cauchy_schwarz(d, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    H = M @ M.T + 0.1 * np.eye(d)
    v = rng.standard_normal(d)
    assert local_norm(v, H) ** 2 * (v @ H @ v) >= (v @ v) ** 2 * (1 - 1e-10)


def test_newton_step_on_quadratic_is_exact():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4))
    H = M @ M.T + np.eye(4)
    c = rng.standard_normal(4)
    z = rng.standard_normal(4)
    v = rng.standard_normal(4)
    alpha = 0.7
    grad = H @ (z - c)  # F(z) = 1/2 (z - c)^T H (z - c)
    step, lam = newton_step(H, grad, alpha, v)
    target = c - np.linalg.solve(H, alpha * v)
    np.testing.assert_allclose(z + step, target, atol=1e-12)
    r = alpha * v + grad
    assert lam == pytest.approx(math.sqrt(r @ np.linalg.solve(H, r)), rel=1e-10)
    assert lam == pytest.approx(math.sqrt(-(step @ r)), rel=1e-10)


def test_newton_step_at_center_vanishes():
    step, lam = newton_step(np.diag([2.0, 3.0]), np.zeros(2), 0.0)
    assert np.all(step == 0.0) and lam == 0.0


def test_factorization_failure_reports_eigenvalue():
    with pytest.raises(FactorizationError) as info:
        spd_factor(np.diag([1.0, -1.0]))
    assert info.value.min_eig == pytest.approx(-1.0)
