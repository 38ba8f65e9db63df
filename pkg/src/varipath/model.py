"""Problem instances: Lagrangian families, coercivity, end-point polyhedron.

A Lagrangian is selected from a registry of closed-form families.  Each family
is a function ``fn(t, x, u, params)`` built from arithmetic and the elementary
functions in :mod:`varipath.autodiff`, so it evaluates on plain arrays (values)
and on :class:`~varipath.autodiff.Jet2` (exact first and second derivatives)
from the same code.  Families may also ship analytic values for the global
maxima used by :mod:`varipath.estimator`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .autodiff import Jet2, lift

__all__ = [
    "Family",
    "AnalyticBounds",
    "register_family",
    "get_family",
    "LagrangianSpec",
    "CoercivityFn",
    "RegularityParams",
    "PolyhedralSet",
    "VariationalProblem",
    "ConditionResult",
    "ValidationReport",
    "eval",
    "eval_grad",
    "eval_hess",
    "feasible",
    "validate_conditions",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
]


# ---------------------------------------------------------------------------
# family registry
# ---------------------------------------------------------------------------


class AnalyticBounds:
    """Closed-form values of the global maxima a family admits.

    Every method may return ``None`` when no closed form applies to the given
    parameters; the estimator then falls back to grid maximization.  ``c`` is
    the radius of the state ball.
    """

    def Lambda0(self, c: float) -> Optional[float]:
        return None

    def Lambda1(self, c: float) -> Optional[float]:
        return None

    def sigma(self, r: float, c: float) -> Optional[float]:
        return None

    def Lambda2(self, R: float, c: float) -> Optional[float]:
        return None

    def K_L(self, ell: float) -> Optional[float]:
        return None


@dataclass(frozen=True)
class Family:
    name: str
    fn: Callable[..., Any]
    n_params: Optional[Callable[[int], int]] = None
    check: Optional[Callable[[np.ndarray, int], None]] = None
    bounds: Optional[Callable[[np.ndarray, int], AnalyticBounds]] = None
    # total polynomial degree in (t, x, u), None if not polynomial
    degree: Optional[Callable[[np.ndarray, int], Optional[int]]] = None


_FAMILIES: Dict[str, Family] = {}


def register_family(
    name: str,
    fn: Callable[..., Any],
    n_params: Optional[Callable[[int], int]] = None,
    check: Optional[Callable[[np.ndarray, int], None]] = None,
    bounds: Optional[Callable[[np.ndarray, int], AnalyticBounds]] = None,
    degree: Optional[Callable[[np.ndarray, int], Optional[int]]] = None,
) -> Family:
    """Add a Lagrangian family to the registry (replacing any previous one)."""
    fam = Family(name, fn, n_params, check, bounds, degree)
    _FAMILIES[name] = fam
    return fam


def get_family(name: str) -> Family:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown Lagrangian family {name!r}; known: {sorted(_FAMILIES)}") from None


def _sumsq(v: Sequence[Any]):
    out = v[0] * v[0]
    for vi in v[1:]:
        out = out + vi * vi
    return out


# power family: L = c0 + lam/2 |u|^2 + alpha |u|^p + rho/2 |x|^2, p even


def _power_fn(t, x, u, params):
    c0, lam, alpha, p, rho = params
    su = _sumsq(u)
    out = c0 + 0.5 * lam * su + 0.5 * rho * _sumsq(x)
    if alpha != 0.0:
        out = out + alpha * su ** (int(p) // 2)
    return out


def _power_check(params: np.ndarray, n: int) -> None:
    c0, lam, alpha, p, rho = params
    if not (float(p).is_integer() and p >= 2 and int(p) % 2 == 0):
        raise ValueError("power family needs an even integer exponent p >= 2")
    if lam < 0 or alpha < 0 or rho < 0:
        raise ValueError("power family needs lam, alpha, rho >= 0")


class _PowerBounds(AnalyticBounds):
    def __init__(self, params: np.ndarray):
        self.c0, self.lam, self.alpha, p, self.rho = (float(v) for v in params)
        self.p = int(p)

    def Lambda0(self, c):
        return self.c0 + 0.5 * self.rho * c * c

    def Lambda1(self, c):
        return 0.0

    def sigma(self, r, c):
        # <grad_u L, u> - L is increasing in |u| and maximal at x = 0
        return 0.5 * self.lam * r * r + (self.p - 1) * self.alpha * r**self.p - self.c0

    def Lambda2(self, R, c):
        return self.c0 + 0.5 * self.lam * R * R + self.alpha * R**self.p + 0.5 * self.rho * c * c

    def K_L(self, ell):
        du = self.lam * ell + self.p * self.alpha * ell ** (self.p - 1)
        return math.hypot(self.rho * ell, du)


def _power_degree(params, n):
    return max(2, int(params[3])) if params[2] != 0 else 2


register_family(
    "power",
    _power_fn,
    n_params=lambda n: 5,
    check=_power_check,
    bounds=lambda params, n: _PowerBounds(params),
    degree=_power_degree,
)

_QUAD1 = np.array([1.0, 1.0, 0.0, 2.0, 1.0])

register_family(
    "quad1",
    lambda t, x, u, params: _power_fn(t, x, u, _QUAD1),
    n_params=lambda n: 0,
    bounds=lambda params, n: _PowerBounds(_QUAD1),
    degree=lambda params, n: 2,
)


# quadratic tracking: L = c0 + 1/2 <Qu,u> + 1/2 <Rx,x> + <q0 + q1 t, x>


def _quad_split(params: np.ndarray, n: int):
    c0 = float(params[0])
    Q = params[1 : 1 + n * n].reshape(n, n)
    R = params[1 + n * n : 1 + 2 * n * n].reshape(n, n)
    q0 = params[1 + 2 * n * n : 1 + 2 * n * n + n]
    q1 = params[1 + 2 * n * n + n :]
    return c0, Q, R, q0, q1


def _quadratic_fn(t, x, u, params):
    n = len(x)
    c0, Q, R, q0, q1 = _quad_split(np.asarray(params, dtype=float), n)
    out = c0
    for i in range(n):
        for j in range(n):
            if Q[i, j] != 0.0:
                out = out + 0.5 * Q[i, j] * (u[i] * u[j])
            if R[i, j] != 0.0:
                out = out + 0.5 * R[i, j] * (x[i] * x[j])
        if q0[i] != 0.0 or q1[i] != 0.0:
            out = out + (q0[i] + q1[i] * t) * x[i]
    return out


def _quadratic_check(params: np.ndarray, n: int) -> None:
    _, Q, R, _, _ = _quad_split(params, n)
    for name, M in (("Q", Q), ("R", R)):
        if not np.allclose(M, M.T):
            raise ValueError(f"quadratic family needs symmetric {name}")
        if np.linalg.eigvalsh(M).min() < -1e-12:
            raise ValueError(f"quadratic family needs positive semidefinite {name}")


class _QuadraticBounds(AnalyticBounds):
    def __init__(self, params: np.ndarray, n: int):
        self.c0, Q, R, q0, q1 = _quad_split(params, n)
        self.qmax = float(np.linalg.eigvalsh(Q).max())
        self.rmax = float(np.linalg.eigvalsh(R).max())
        self.linear = bool(np.any(q0) or np.any(q1))

    def Lambda0(self, c):
        return None if self.linear else self.c0 + 0.5 * self.rmax * c * c

    def Lambda1(self, c):
        return 0.0

    def sigma(self, r, c):
        return None if self.linear else 0.5 * self.qmax * r * r - self.c0

    def Lambda2(self, R, c):
        return None if self.linear else self.c0 + 0.5 * self.qmax * R * R + 0.5 * self.rmax * c * c

    def K_L(self, ell):
        return None if self.linear else math.hypot(self.rmax * ell, self.qmax * ell)


register_family(
    "quadratic",
    _quadratic_fn,
    n_params=lambda n: 1 + 2 * n * n + 2 * n,
    check=_quadratic_check,
    bounds=lambda params, n: _QuadraticBounds(params, n),
    degree=lambda params, n: 2,
)


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LagrangianSpec:
    """A registered Lagrangian family with its coefficients and state dimension."""

    family: str
    params: tuple = ()
    n: int = 1

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("state dimension n must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        fam = get_family(self.family)
        if fam.n_params is not None and len(self.params) != fam.n_params(self.n):
            raise ValueError(
                f"family {self.family!r} with n={self.n} expects {fam.n_params(self.n)} params, "
                f"got {len(self.params)}"
            )
        if fam.check is not None:
            fam.check(np.asarray(self.params), self.n)

    @property
    def dim(self) -> int:
        """Number of independent variables (t, x, u)."""
        return 1 + 2 * self.n

    @property
    def bounds(self) -> Optional[AnalyticBounds]:
        fam = get_family(self.family)
        return None if fam.bounds is None else fam.bounds(np.asarray(self.params), self.n)

    @property
    def degree(self) -> Optional[int]:
        fam = get_family(self.family)
        return None if fam.degree is None else fam.degree(np.asarray(self.params), self.n)

    def _split(self, t, x, u):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[-1:] != (self.n,) or u.shape[-1:] != (self.n,):
            raise ValueError(f"expected state/velocity of dimension {self.n}")
        return t, x, u

    def value(self, t, x, u) -> np.ndarray:
        """Vectorized L(t, x, u); x and u have trailing dimension n."""
        t, x, u = self._split(t, x, u)
        fn = get_family(self.family).fn
        out = fn(t, [x[..., i] for i in range(self.n)], [u[..., i] for i in range(self.n)], self.params)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1], u.shape[:-1])
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def jet(self, t, x, u) -> Jet2:
        """Vectorized value, gradient and Hessian in the variables (t, x, u)."""
        t, x, u = self._split(t, x, u)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1], u.shape[:-1])
        point = np.empty(shape + (self.dim,))
        point[..., 0] = t
        point[..., 1 : 1 + self.n] = x
        point[..., 1 + self.n :] = u
        v = lift(point)
        out = get_family(self.family).fn(v[0], v[1 : 1 + self.n], v[1 + self.n :], self.params)
        if not isinstance(out, Jet2):
            out = Jet2(
                np.broadcast_to(np.asarray(out, dtype=float), shape),
                np.zeros(shape + (self.dim,)),
                np.zeros(shape + (self.dim, self.dim)),
            )
        elif out.value.shape != shape:
            out = Jet2(
                np.broadcast_to(out.value, shape),
                np.broadcast_to(out.grad, shape + (self.dim,)),
                np.broadcast_to(out.hess, shape + (self.dim, self.dim)),
            )
        return out


def eval(L: LagrangianSpec, t: float, x, u) -> float:
    """L(t, x, u) at a single point."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return float(L.value(t, np.atleast_1d(x), np.atleast_1d(u)))


def eval_grad(L: LagrangianSpec, t: float, x, u):
    """Partial derivatives (dL/dt, grad_x L, grad_u L) at a single point."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    g = L.jet(t, np.atleast_1d(x), np.atleast_1d(u)).grad
    n = L.n
    return float(g[0]), np.array(g[1 : 1 + n]), np.array(g[1 + n :])


def eval_hess(L: LagrangianSpec, t: float, x, u):
    """Blocks (Hxx, Hxu, Huu) of the Hessian in (x, u) at a single point."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    H = L.jet(t, np.atleast_1d(x), np.atleast_1d(u)).hess
    n = L.n
    return (
        np.array(H[1 : 1 + n, 1 : 1 + n]),
        np.array(H[1 : 1 + n, 1 + n :]),
        np.array(H[1 + n :, 1 + n :]),
    )


_THETA_FAMILIES = {
    # theta(r) = c0 + c2 r^p
    "affine_power": (3, lambda r, c: c[0] + c[1] * np.power(r, c[2])),
    "log1p": (0, lambda r, c: np.log1p(r)),
}


@dataclass(frozen=True)
class CoercivityFn:
    """Lower bound theta(|u|) for the Lagrangian."""

    family: str = "affine_power"
    coefficients: tuple = (1.0, 0.5, 2.0)

    def __post_init__(self):
        if self.family not in _THETA_FAMILIES:
            raise ValueError(f"unknown coercivity family {self.family!r}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        k = _THETA_FAMILIES[self.family][0]
        if len(self.coefficients) != k:
            raise ValueError(f"coercivity family {self.family!r} expects {k} coefficients")
        if self.family == "affine_power" and self.coefficients[2] <= 1:
            raise ValueError("affine_power coercivity needs exponent p > 1")

    def __call__(self, r):
        return _THETA_FAMILIES[self.family][1](np.asarray(r, dtype=float), self.coefficients)


@dataclass(frozen=True)
class RegularityParams:
    mu: float
    xi: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0 and self.xi > 0 and self.delta >= 0):
            raise ValueError("need mu > 0, xi > 0, delta >= 0")
        for name in ("mu", "xi", "delta"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class PolyhedralSet:
    """The end-point set {x : A x <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] < 1 or A.shape[0] != b.shape[0] or b.ndim != 1:
            raise ValueError("A must be m x n and b an m-vector with m >= 1")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def slack(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.n:
            raise ValueError(f"point has dimension {x.shape[-1]}, set lives in R^{self.n}")
        return self.b - x @ self.A.T


def feasible(S: PolyhedralSet, x, strict: bool = False) -> bool:
    s = S.slack(x)
    return bool(np.all(s > 0)) if strict else bool(np.all(s >= 0))


@dataclass(frozen=True)
class VariationalProblem:
    lagrangian: LagrangianSpec
    theta: CoercivityFn
    reg: RegularityParams
    endpoint: PolyhedralSet
    a: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.lagrangian.n
        if self.endpoint.n != n:
            raise ValueError("end-point set dimension does not match the Lagrangian")
        a = self.a
        if a is None:
            a = np.zeros(n)
            if not feasible(self.endpoint, a):
                raise ValueError("A 0 <= b fails; a reference end point a in S must be supplied")
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a.shape != (n,):
            raise ValueError("reference point a has the wrong dimension")
        if not feasible(self.endpoint, a):
            raise ValueError("reference point a violates A a <= b")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.lagrangian.n

    @property
    def m(self) -> int:
        return self.endpoint.m


# ---------------------------------------------------------------------------
# sample-based condition checks
# ---------------------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    checked: int
    worst_margin: float
    witness: Optional[Dict[str, Any]] = None


@dataclass
class ValidationReport:
    results: List[ConditionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            r.name: {
                "passed": r.passed,
                "checked": r.checked,
                "worst_margin": r.worst_margin,
                "witness": r.witness,
            }
            for r in self.results
        }


def _ball(rng: np.random.Generator, k: int, n: int, radius: float) -> np.ndarray:
    d = rng.standard_normal((k, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random((k, 1)) ** (1.0 / n))


def _result(name: str, margin: np.ndarray, tol: np.ndarray, witness: Dict[str, np.ndarray]) -> ConditionResult:
    scaled = margin + tol
    i = int(np.argmin(scaled))
    ok = bool(scaled[i] >= 0)
    wit = None if ok else {k: np.asarray(v[i]).tolist() for k, v in witness.items()}
    return ConditionResult(name, ok, int(margin.size), float(margin[i]), wit)


def validate_conditions(
    p: VariationalProblem, samples: int = 1000, radius: float = 10.0, seed: int = 0
) -> ValidationReport:
    """Try to falsify the standing assumptions on random samples.

    Checks coercivity ``L >= theta(|u|) > 0``, strong convexity in ``u`` with
    modulus ``mu``, the growth bound on the (t, x)-gradient, and strong joint
    convexity in ``(x, u)``.  A failing condition carries a witness point.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    L, n, reg = p.lagrangian, p.n, p.reg
    rng = np.random.default_rng(seed)
    t = rng.random(samples)
    x1, u1 = _ball(rng, samples, n, radius), _ball(rng, samples, n, radius)
    x2, u2 = _ball(rng, samples, n, radius), _ball(rng, samples, n, radius)

    j1 = L.jet(t, x1, u1)
    L1 = j1.value
    gt, gx, gu = j1.grad[:, 0], j1.grad[:, 1 : 1 + n], j1.grad[:, 1 + n :]
    report = ValidationReport()

    def tol(*vals):
        return 1e-9 * (1.0 + sum(np.abs(v) for v in vals))

    th = p.theta(np.linalg.norm(u1, axis=1))
    margin = np.minimum(L1 - th, th)
    report.results.append(
        _result("coercivity", margin, tol(L1) * (th > 0), {"t": t, "x": x1, "u": u1})
    )

    Lv = L.value(t, x1, u2)
    du = u2 - u1
    margin = Lv - L1 - np.sum(gu * du, axis=1) - 0.5 * reg.mu * np.sum(du * du, axis=1)
    report.results.append(
        _result("strong_convexity_u", margin, tol(L1, Lv), {"t": t, "x": x1, "u": u1, "v": u2})
    )

    grad_tx = np.sqrt(gt**2 + np.sum(gx * gx, axis=1))
    margin = reg.xi * L1 + reg.delta - grad_tx
    report.results.append(_result("gradient_growth", margin, tol(L1), {"t": t, "x": x1, "u": u1}))

    L2 = L.value(t, x2, u2)
    dx = x2 - x1
    margin = (
        L2
        - L1
        - np.sum(gx * dx, axis=1)
        - np.sum(gu * du, axis=1)
        - 0.5 * reg.mu * (np.sum(dx * dx, axis=1) + np.sum(du * du, axis=1))
    )
    report.results.append(
        _result(
            "strong_convexity_xu",
            margin,
            tol(L1, L2),
            {"t": t, "x1": x1, "u1": u1, "x2": x2, "u2": u2},
        )
    )
    return report


# ---------------------------------------------------------------------------
# JSON ingestion
# ---------------------------------------------------------------------------


def problem_from_dict(d: Dict[str, Any]) -> VariationalProblem:
    try:
        n = int(d["n"])
        lag = LagrangianSpec(d["family"], tuple(d.get("params", ())), n)
        th = d.get("theta", {})
        theta = CoercivityFn(th.get("family", "affine_power"), tuple(th.get("coefficients", (1.0, 0.5, 2.0))))
        reg = RegularityParams(float(d["mu"]), float(d["xi"]), float(d.get("delta", 0.0)))
        S = PolyhedralSet(np.array(d["A"], dtype=float).reshape(-1, n), np.array(d["b"], dtype=float))
        a = d.get("a")
    except KeyError as exc:
        raise ValueError(f"problem document is missing field {exc.args[0]!r}") from None
    return VariationalProblem(lag, theta, reg, S, None if a is None else np.array(a, dtype=float))


def problem_to_dict(p: VariationalProblem) -> Dict[str, Any]:
    return {
        "n": p.n,
        "family": p.lagrangian.family,
        "params": list(p.lagrangian.params),
        "theta": {"family": p.theta.family, "coefficients": list(p.theta.coefficients)},
        "mu": p.reg.mu,
        "xi": p.reg.xi,
        "delta": p.reg.delta,
        "A": p.endpoint.A.tolist(),
        "b": p.endpoint.b.tolist(),
        "a": p.a.tolist(),
    }


def load_problem(path) -> VariationalProblem:
    with open(Path(path)) as fh:
        return problem_from_dict(json.load(fh))

