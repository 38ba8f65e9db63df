"""Closed-form benchmarks, necessary-condition residuals and error metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .discretize import PiecewiseConstantControl, QuadratureRule, objective_derivatives, objective_P, trajectory
from .model import (
    CoercivityFn,
    LagrangianSpec,
    PolyhedralSet,
    RegularityParams,
    VariationalProblem,
)

__all__ = [
    "ReferenceSolution",
    "benchmark_sinh",
    "el_residual",
    "transversality_check",
    "error_metrics",
    "discrete_qp_optimum",
]


@dataclass(frozen=True)
class ReferenceSolution:
    x: Callable[[np.ndarray], np.ndarray]
    xdot: Callable[[np.ndarray], np.ndarray]
    optimum: float
    provenance: str
    lagrangian: LagrangianSpec


def benchmark_sinh(B: float = 1.0):
    """quad1 on [0, 1] with x(0) = 0 and x(1) >= B.

    The minimizer solves x'' = x, so x(t) = B sinh(t)/sinh(1) and the optimal
    value is 1 + (B^2/2) coth(1).  ``B = 0`` gives the slack case x = 0.
    """
    if B < 0:
        raise ValueError("B must be nonnegative")
    L = LagrangianSpec("quad1", (), 1)
    problem = VariationalProblem(
        L,
        CoercivityFn("affine_power", (1.0, 0.5, 2.0)),
        RegularityParams(1.0, 1.0, 0.0),
        PolyhedralSet(np.array([[-1.0]]), np.array([-float(B)])),
        np.array([float(B)]),
    )
    s1 = math.sinh(1.0)

    def x(t):
        t = np.asarray(t, dtype=float)
        return (B * np.sinh(t) / s1)[..., None]

    def xdot(t):
        t = np.asarray(t, dtype=float)
        return (B * np.cosh(t) / s1)[..., None]

    opt = 1.0 + 0.5 * B * B / math.tanh(1.0)
    return problem, ReferenceSolution(x, xdot, opt, f"sinh:B={B!r}", L)


def _as_states(x, t: np.ndarray) -> np.ndarray:
    v = np.asarray(x(t), dtype=float)
    return v[:, None] if v.ndim == 1 else v


@lru_cache(maxsize=None)
def _stencil(offsets: Tuple[int, ...]) -> np.ndarray:
    """First-derivative weights on integer offsets, exact for polynomials of degree len - 1."""
    k = len(offsets)
    V = np.vander(np.asarray(offsets, dtype=float), k, increasing=True).T
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def _diff5(Y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order derivative along axis 0 of samples on a uniform grid.

    Windows are shifted at the ends so every node uses five samples; the
    error is O(h^4) everywhere, so a second application stays accurate.
    """
    M = Y.shape[0]
    out = np.empty_like(Y)
    for i in range(M):
        lo = min(max(i - 2, 0), M - 5)
        w = _stencil(tuple(range(lo - i, lo - i + 5)))
        out[i] = np.tensordot(w, Y[lo : lo + 5], axes=1) / h
    return out


def el_residual(L: LagrangianSpec, x: Callable[[np.ndarray], np.ndarray], M: int = 101) -> float:
    """Max over an M-point grid of |d/dt grad_u L - grad_x L| by finite differences."""
    if M < 5:
        raise ValueError("need at least 5 grid points")
    t = np.linspace(0.0, 1.0, M)
    h = t[1] - t[0]
    X = _as_states(x, t)
    Xd = _diff5(X, h)
    g = L.jet(t, X, Xd).grad
    n = L.n
    gx, gu = g[:, 1 : 1 + n], g[:, 1 + n :]
    dgu = _diff5(gu, h)
    return float(np.max(np.linalg.norm(dgu - gx, axis=1)))


def transversality_check(
    L: LagrangianSpec,
    x: Callable[[np.ndarray], np.ndarray],
    S: PolyhedralSet,
    xdot: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """min over z in S (within a probe box) of <grad_u L(1, x(1), x'(1)), z - x(1)>.

    Negative values witness a violated end-point condition.  Without ``xdot``
    the end velocity is a one-sided second-order difference.
    """
    x1 = _as_states(x, np.array([1.0]))[0]
    if xdot is not None:
        v1 = _as_states(xdot, np.array([1.0]))[0]
    else:
        h = 1e-5
        X = _as_states(x, np.array([1.0 - 2 * h, 1.0 - h, 1.0]))
        v1 = (3 * X[2] - 4 * X[1] + X[0]) / (2 * h)
    g = L.jet(1.0, x1, v1).grad[1 + L.n :]
    R = 10.0 * max(1.0, float(np.linalg.norm(x1)))
    bounds = [(xi - R, xi + R) for xi in x1]
    res = linprog(g, A_ub=S.A, b_ub=S.b, bounds=bounds, method="highs")
    if res.status != 0:
        raise ValueError(f"probe LP failed: {res.message}")
    return float(g @ (res.x - x1))


def error_metrics(
    candidate: PiecewiseConstantControl,
    ref: ReferenceSolution,
    mu: float,
    quad: QuadratureRule = QuadratureRule(),
    l2_order: int = 10,
) -> Dict[str, float]:
    """Objective gap, squared L2 distance in (x, u) and max velocity of ``candidate``."""
    gap = abs(objective_P(candidate, ref.lagrangian, quad) - ref.optimum)
    N = candidate.N
    z = QuadratureRule(l2_order)
    t = ((np.arange(N)[:, None] + z.nodes[None, :]) / N).reshape(-1)
    w = np.tile(z.weights / N, N)
    xb = trajectory(candidate, t)
    ub = np.repeat(candidate.values, l2_order, axis=0)
    dx = xb - _as_states(ref.x, t)
    du = ub - _as_states(ref.xdot, t)
    l2 = float(np.sum(w * (np.sum(dx * dx, axis=1) + np.sum(du * du, axis=1))))
    lip = float(np.max(np.linalg.norm(candidate.values, axis=1)))
    return {"objective_gap": float(gap), "l2_distance": l2, "lipschitz_max": lip, "l2_bound_factor": 2.0 / mu}


def discrete_qp_optimum(
    problem: VariationalProblem,
    N: int,
    quad: QuadratureRule = QuadratureRule(),
):
    """Exact minimizer over U_N of a quadratic Lagrangian subject to A x(1) <= b.

    Uses the KKT system on every active subset of the end-point rows (m is
    small); returns (value, control).  Only valid when the quadrature is exact,
    i.e. for families of polynomial degree 2.
    """
    L = problem.lagrangian
    if L.degree != 2:
        raise ValueError("discrete_qp_optimum needs a quadratic Lagrangian")
    n = problem.n
    zero = PiecewiseConstantControl(np.zeros((N, n)))
    P0, g0, H = objective_derivatives(zero, L, quad)
    E = np.tile(problem.endpoint.A, (1, N)) / N
    b = problem.endpoint.b
    m = E.shape[0]
    best = None
    for size in range(m + 1):
        for act in itertools.combinations(range(m), size):
            act = list(act)
            k = len(act)
            K = np.zeros((N * n + k, N * n + k))
            K[: N * n, : N * n] = H
            K[: N * n, N * n :] = E[act].T
            K[N * n :, : N * n] = E[act]
            rhs = np.concatenate([-g0, b[act]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            # stationarity H u + g0 + E^T lam = 0 with lam >= 0 on active rows
            u, lam = sol[: N * n], sol[N * n :]
            if np.any(E @ u > b + 1e-10) or np.any(lam < -1e-10):
                continue
            val = float(P0 + g0 @ u + 0.5 * u @ H @ u)
            if best is None or val < best[0]:
                best = (val, u)
    if best is None:
        raise ValueError("no KKT point found")
    return best[0], PiecewiseConstantControl.from_flat(best[1], n)


def run_benchmarks(
    epsilons: Sequence[float] = (0.5, 0.1, 0.02),
    N: int = 32,
    B: float = 1.0,
    estimator_options=None,
) -> Dict[str, Any]:
    """Solve the sinh benchmark at each accuracy and check every guarantee."""
    from .estimator import EstimatorOptions, compute_all
    from .solver import SolverConfig, path_follow

    problem, ref = benchmark_sinh(B)
    consts = compute_all(problem, estimator_options or EstimatorOptions())
    max_speed = float(np.max(np.abs(ref.xdot(np.linspace(0.0, 1.0, 1001)))))
    out: Dict[str, Any] = {
        "benchmark": ref.provenance,
        "optimum": ref.optimum,
        "ell": consts.ell,
        "N": N,
        "reference_max_velocity": max_speed,
        "lipschitz_bound_holds": max_speed <= consts.ell,
        "el_residual": el_residual(ref.lagrangian, ref.x),
        "transversality": transversality_check(ref.lagrangian, ref.x, problem.endpoint, ref.xdot),
        "runs": [],
    }
    for eps in epsilons:
        rep = path_follow(problem, consts, SolverConfig(epsilon=eps, N=N), reference=ref)
        g = rep.guarantee_residuals
        out["runs"].append(
            {
                "epsilon": eps,
                "iterations": rep.iterations,
                "predicted": rep.predicted_N_iters,
                "objective": rep.objective,
                **g,
                "pass": {
                    "iterations": rep.iterations <= rep.predicted_N_iters,
                    "objective_gap": g["objective_gap"] < eps,
                    "l2": g["l2_distance"] <= 2.0 / problem.reg.mu * eps,
                    "lipschitz": g["lipschitz_max"] <= consts.ell,
                },
            }
        )
    out["passed"] = bool(
        out["lipschitz_bound_holds"] and all(all(r["pass"].values()) for r in out["runs"])
    )
    return out
