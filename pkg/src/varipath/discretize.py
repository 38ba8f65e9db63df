"""Piecewise-constant controls and the discretized objective.

A control in the class U_N takes the value ``u_k`` on the k-th of N uniform
subintervals of [0, 1].  Its trajectory ``x(t) = int_0^t u`` is piecewise
linear with nodal states ``X_k = tau * (u_0 + ... + u_{k-1})``.  The objective

    P(u) = sum_k int_{k tau}^{(k+1) tau} L(t, x(t), u_k) dt

is approximated by a Gauss-Legendre rule on every subinterval; gradient and
Hessian are the exact derivatives of that approximation.
"""

from __future__ import annotations

import csv
import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .model import LagrangianSpec

__all__ = [
    "QuadratureRule",
    "PiecewiseConstantControl",
    "trajectory",
    "node_states",
    "objective_P",
    "objective_grad",
    "objective_hess",
    "objective_derivatives",
    "required_N",
    "interpolate_reference",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule mapped to [0, 1]; exact up to degree 2*order - 1."""

    order: int = 5

    def __post_init__(self):
        if int(self.order) < 1:
            raise ValueError("quadrature order must be positive")
        object.__setattr__(self, "order", int(self.order))

    @property
    def nodes(self) -> np.ndarray:
        x, _ = np.polynomial.legendre.leggauss(self.order)
        return 0.5 * (x + 1.0)

    @property
    def weights(self) -> np.ndarray:
        _, w = np.polynomial.legendre.leggauss(self.order)
        return 0.5 * w

    @property
    def degree(self) -> int:
        return 2 * self.order - 1

    def integrate(self, f, a: float = 0.0, b: float = 1.0, pieces: int = 1) -> float:
        """Composite integral of a vectorized scalar function over [a, b]."""
        edges = np.linspace(a, b, pieces + 1)
        h = np.diff(edges)[:, None]
        t = edges[:-1, None] + h * self.nodes[None, :]
        return float(np.sum(h * self.weights[None, :] * f(t)))


@dataclass
class PiecewiseConstantControl:
    """Values ``u_k`` (row k) on the uniform grid with step ``tau = 1/N``."""

    values: np.ndarray
    ell: float = math.inf

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("control values must be an N x n array with N >= 1")
        self.values = v

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def in_box(self, strict: bool = False) -> bool:
        a = np.abs(self.values)
        return bool(np.all(a < self.ell)) if strict else bool(np.all(a <= self.ell))

    def endpoint(self) -> np.ndarray:
        """x(1) = tau * sum_k u_k."""
        return self.tau * self.values.sum(axis=0)

    @classmethod
    def from_flat(cls, flat, n: int, ell: float = math.inf) -> "PiecewiseConstantControl":
        return cls(np.asarray(flat, dtype=float).reshape(-1, n), ell)


def _nodal(values: np.ndarray) -> np.ndarray:
    """X_0..X_N for the given control values."""
    N, n = values.shape
    X = np.zeros((N + 1, n))
    np.cumsum(values / N, axis=0, out=X[1:])
    return X


def trajectory(u: PiecewiseConstantControl, t) -> np.ndarray:
    """State x(t) of the piecewise-linear trajectory; ``t`` scalar or array."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError("t must lie in [0, 1]")
    N = u.N
    X = _nodal(u.values)
    k = np.minimum(np.floor(t_arr * N).astype(int), N - 1)
    s = t_arr - k / N
    out = X[k] + s[..., None] * u.values[k]
    return out


def node_states(u: PiecewiseConstantControl, quad: QuadratureRule) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature times (N, q) and states (N, q, n) of the trajectory."""
    N = u.N
    tau = u.tau
    z = quad.nodes
    X = _nodal(u.values)[:-1]
    t = (np.arange(N)[:, None] + z[None, :]) * tau
    x = X[:, None, :] + (z[None, :, None] * tau) * u.values[:, None, :]
    return t, x


def objective_P(u: PiecewiseConstantControl, L: LagrangianSpec, quad: QuadratureRule = QuadratureRule()) -> float:
    t, x = node_states(u, quad)
    vals = L.value(t, x, np.broadcast_to(u.values[:, None, :], x.shape))
    W = u.tau * quad.weights
    # fixed summation order: per-interval sums, then over intervals
    return float(np.sum(vals @ W))


@lru_cache(maxsize=8)
def _block_tril(N: int, n: int) -> np.ndarray:
    tri = np.tri(N, N, -1, dtype=bool)
    return np.repeat(np.repeat(tri, n, axis=0), n, axis=1)


def objective_derivatives(
    u: PiecewiseConstantControl,
    L: LagrangianSpec,
    quad: QuadratureRule = QuadratureRule(),
    hessian: bool = True,
):
    """Value, flat gradient (N n) and dense Hessian (N n x N n) of P."""
    N, n = u.N, u.n
    tau = u.tau
    z = quad.nodes
    t, x = node_states(u, quad)
    jet = L.jet(t, x, np.broadcast_to(u.values[:, None, :], x.shape))
    W = tau * quad.weights
    Wz = W * z
    value = float(np.sum(jet.value @ W))

    g = jet.grad
    gx = g[..., 1 : 1 + n]
    gu = g[..., 1 + n :]
    Gu = np.einsum("q,kqi->ki", W, gu)
    Gx = np.einsum("q,kqi->ki", W, gx)
    Gx1 = np.einsum("q,kqi->ki", Wz, gx)
    # suffix sums over later intervals: sum_{k > j} Gx_k
    tail = np.zeros((N + 1, n))
    tail[:-1] = np.cumsum(Gx[::-1], axis=0)[::-1]
    grad = Gu + tau * Gx1 + tau * tail[1:]
    grad = grad.reshape(-1)
    if not hessian:
        return value, grad, None

    h = jet.hess
    hxx = h[..., 1 : 1 + n, 1 : 1 + n]
    hux = h[..., 1 + n :, 1 : 1 + n]
    huu = h[..., 1 + n :, 1 + n :]
    A = np.einsum("q,kqab->kab", W, hxx)
    A1 = np.einsum("q,kqab->kab", Wz, hxx)
    A2 = np.einsum("q,kqab->kab", Wz * z, hxx)
    B = np.einsum("q,kqab->kab", W, hux)
    B1 = np.einsum("q,kqab->kab", Wz, hux)
    Uu = np.einsum("q,kqab->kab", W, huu)
    S = np.zeros((N + 1, n, n))
    S[:-1] = np.cumsum(A[::-1], axis=0)[::-1]

    # off-diagonal block (i, j), i > j, only depends on i:
    # tau^2 (sum_{k > i} A_k + A1_i) + tau B_i; the upper triangle mirrors it
    D = tau * tau * (S[1:] + A1) + tau * B
    rows = np.broadcast_to(D[:, :, None, :], (N, n, N, n)).reshape(N * n, N * n)
    H = np.where(_block_tril(N, n), rows, 0.0)
    H += H.T
    Dg = tau * tau * (S[1:] + A2) + tau * (B1 + np.swapaxes(B1, -1, -2)) + Uu
    idx = np.arange(N)
    H.reshape(N, n, N, n)[idx, :, idx, :] = 0.5 * (Dg + np.swapaxes(Dg, -1, -2))
    return value, grad, H


def objective_grad(u: PiecewiseConstantControl, L: LagrangianSpec, quad: QuadratureRule = QuadratureRule()) -> np.ndarray:
    return objective_derivatives(u, L, quad, hessian=False)[1]


def objective_hess(u: PiecewiseConstantControl, L: LagrangianSpec, quad: QuadratureRule = QuadratureRule()) -> np.ndarray:
    return objective_derivatives(u, L, quad)[2]


def required_N(epsilon: float, ell: float, K_L: float) -> int:
    """Smallest grid size N with N > 4 (1 + ell) K_L / epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return int(math.floor(4.0 * (1.0 + ell) * K_L / epsilon)) + 1


def interpolate_reference(x_samples, N: Optional[int] = None, ell: float = math.inf) -> PiecewiseConstantControl:
    """Control whose trajectory passes through ``x_samples[k]`` at ``t = k/N``."""
    xs = np.asarray(x_samples, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if N is None:
        N = xs.shape[0] - 1
    if xs.shape[0] != N + 1:
        raise ValueError(f"need N + 1 = {N + 1} samples, got {xs.shape[0]}")
    return PiecewiseConstantControl(np.diff(xs, axis=0) * N, ell)


def write_trajectory_csv(path, u: PiecewiseConstantControl, per_interval: int = 4) -> None:
    """Write columns t, x_1..x_n, u_1..u_n sampled ``per_interval`` times per subinterval."""
    N, n = u.N, u.n
    t = np.linspace(0.0, 1.0, N * per_interval + 1)
    x = trajectory(u, t)
    k = np.minimum(np.floor(t * N).astype(int), N - 1)
    uu = u.values[k]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n)])
        for j in range(t.size):
            w.writerow([repr(float(t[j]))] + [repr(float(v)) for v in x[j]] + [repr(float(v)) for v in uu[j]])
