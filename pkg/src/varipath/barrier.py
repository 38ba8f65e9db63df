"""Logarithmic barrier for the discretized problem.

For a flat control ``u`` (length N n) and epigraph variable ``sigma``::

    F(u, sigma) = -ln(sigma - P(u)) - ln(sigma_bar - sigma)
                  - sum_i ln(b_i - (A x(1))_i)
                  - sum_k sum_i ln(ell^2 - (u_k^(i))^2)

with ``x(1) = tau * sum_k u_k``.  ``literal_endpoint=True`` drops the factor
``tau`` and uses ``A sum_k u_k`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla

from .discretize import PiecewiseConstantControl, QuadratureRule, objective_derivatives, objective_P
from .errors import DomainError, FactorizationError
from .model import VariationalProblem

__all__ = [
    "BarrierPoint",
    "BarrierEval",
    "Barrier",
    "barrier_eval",
    "spd_factor",
    "local_norm",
    "newton_step",
]

BOUNDARY_TOL = 1e-12


@dataclass
class BarrierPoint:
    u: np.ndarray  # flat, length N n
    sigma: float

    @property
    def z(self) -> np.ndarray:
        return np.append(self.u, self.sigma)

    @classmethod
    def from_z(cls, z: np.ndarray) -> "BarrierPoint":
        return cls(np.array(z[:-1]), float(z[-1]))


@dataclass
class BarrierEval:
    value: float
    grad: np.ndarray
    hess: Optional[np.ndarray]
    P: float


class Barrier:
    """The barrier of one discretized problem instance."""

    def __init__(
        self,
        problem: VariationalProblem,
        ell: float,
        sigma_bar: float,
        N: int,
        quad: QuadratureRule = QuadratureRule(),
        literal_endpoint: bool = False,
    ):
        self.problem = problem
        self.L = problem.lagrangian
        self.n = problem.n
        self.N = int(N)
        self.ell = float(ell)
        self.sigma_bar = float(sigma_bar)
        self.quad = quad
        self.literal_endpoint = literal_endpoint
        self.A = problem.endpoint.A
        self.b = problem.endpoint.b
        scale = 1.0 if literal_endpoint else 1.0 / self.N
        # Jacobian of A x(1) with respect to the flat control
        self.E = scale * np.tile(self.A, (1, self.N))

    @property
    def dim(self) -> int:
        return self.N * self.n + 1

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def control(self, u_flat: np.ndarray) -> PiecewiseConstantControl:
        return PiecewiseConstantControl.from_flat(u_flat, self.n, self.ell)

    def slacks(self, z: np.ndarray, P: Optional[float] = None):
        u, sigma = z[:-1], z[-1]
        if P is None:
            P = objective_P(self.control(u), self.L, self.quad)
        return sigma - P, self.sigma_bar - sigma, self.b - self.E @ u, self.ell**2 - u * u, P

    def check_domain(self, z: np.ndarray, P: Optional[float] = None) -> float:
        """Raise DomainError unless ``z`` is strictly inside; returns P(u)."""
        s, d, r, w, P = self.slacks(z, P)
        if not s > BOUNDARY_TOL:
            raise DomainError(f"epigraph: sigma - P(u) = {s:.3g}", "epigraph", 0)
        if not d > BOUNDARY_TOL:
            raise DomainError(f"cap: sigma_bar - sigma = {d:.3g}", "cap", 0)
        bad = np.flatnonzero(~(r > BOUNDARY_TOL))
        if bad.size:
            raise DomainError(f"end-point row {bad[0]}: slack {r[bad[0]]:.3g}", "endpoint", int(bad[0]))
        bad = np.flatnonzero(~(w > BOUNDARY_TOL))
        if bad.size:
            raise DomainError(f"box coordinate {bad[0]}: slack {w[bad[0]]:.3g}", "box", int(bad[0]))
        return P

    def contains(self, z: np.ndarray) -> bool:
        try:
            self.check_domain(z)
        except DomainError:
            return False
        return True

    def value(self, z: np.ndarray) -> float:
        P = self.check_domain(z)
        s, d, r, w, _ = self.slacks(z, P)
        return float(-np.log(s) - np.log(d) - np.sum(np.log(r)) - np.sum(np.log(w)))

    def evaluate(self, z: np.ndarray, hessian: bool = True) -> BarrierEval:
        u = z[:-1]
        P, gP, HP = objective_derivatives(self.control(u), self.L, self.quad, hessian=hessian)
        self.check_domain(z, P)
        s, d, r, w, _ = self.slacks(z, P)
        value = float(-np.log(s) - np.log(d) - np.sum(np.log(r)) - np.sum(np.log(w)))

        k = u.size
        grad = np.empty(k + 1)
        Er = self.E.T @ (1.0 / r)
        grad[:k] = gP / s + Er + 2.0 * u / w
        grad[k] = -1.0 / s + 1.0 / d
        if not hessian:
            return BarrierEval(value, grad, None, P)

        H = np.empty((k + 1, k + 1))
        Huu = H[:k, :k]
        np.multiply(HP, 1.0 / s, out=Huu)
        Huu += np.outer(gP, gP) / (s * s)
        Es = self.E / r[:, None]
        Huu += Es.T @ Es
        Huu[np.diag_indices(k)] += 2.0 * (self.ell**2 + u * u) / (w * w)
        H[:k, k] = H[k, :k] = -gP / (s * s)
        H[k, k] = 1.0 / (s * s) + 1.0 / (d * d)
        return BarrierEval(value, grad, H, P)


def barrier_eval(
    pt: BarrierPoint,
    problem: VariationalProblem,
    constants,
    quad: QuadratureRule = QuadratureRule(),
    literal_endpoint: bool = False,
) -> BarrierEval:
    """Value, gradient and Hessian of the barrier at a strict-domain point."""
    N = pt.u.size // problem.n
    bar = Barrier(problem, constants.ell, constants.sigma_bar, N, quad, literal_endpoint)
    return bar.evaluate(pt.z)


# ---------------------------------------------------------------------------
# linear algebra in the barrier geometry
# ---------------------------------------------------------------------------


def spd_factor(H: np.ndarray):
    """Cholesky factor of H, retrying once with a 1e-12 * trace/dim diagonal shift."""
    try:
        return sla.cho_factor(H, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        shift = 1e-12 * np.trace(H) / H.shape[0]
        try:
            return sla.cho_factor(H + shift * np.eye(H.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            lam = float(np.linalg.eigvalsh(H).min())
            raise FactorizationError(
                f"Hessian not positive definite near the boundary (smallest eigenvalue {lam:.3g})", lam
            ) from None


Factor = Tuple[np.ndarray, bool]


def _factor(H: Union[np.ndarray, Factor]) -> Factor:
    if isinstance(H, tuple):
        return H
    return spd_factor(np.atleast_2d(np.asarray(H, dtype=float)))


def local_norm(v, H: Union[np.ndarray, Factor]) -> float:
    """sqrt(v^T H^{-1} v) for symmetric positive definite H (or its factor)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    y = sla.cho_solve(_factor(H), v)
    return float(np.sqrt(max(float(v @ y), 0.0)))


def newton_step(H: Union[np.ndarray, Factor], grad, alpha: float, v=None) -> Tuple[np.ndarray, float]:
    """step = -H^{-1}(alpha v + grad) and its local norm.

    ``v`` defaults to the epigraph direction (0, ..., 0, 1).
    """
    grad = np.asarray(grad, dtype=float)
    if v is None:
        v = np.zeros_like(grad)
        v[-1] = 1.0
    r = alpha * np.asarray(v, dtype=float) + grad
    step = -sla.cho_solve(_factor(H), r)
    return step, float(np.sqrt(max(-float(step @ r), 0.0)))
