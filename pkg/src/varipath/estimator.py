"""Explicit Lipschitz bound for the optimal velocity and its constants.

The chain runs::

    r0 -> c -> Lambda0, Lambda1, sigma(.) -> (T0, beta) -> eta -> gamma_bar
       -> Lambda2 -> varrho -> ell -> K_L -> sigma_bar

Global maxima over ``[0, 1] x c B_n`` use the family's closed forms when it
ships them, otherwise a uniform grid whose maximum is inflated by a relative
safety margin (``v + safety * |v|``) so that downstream bounds stay on the
safe side.  Every constant carries a provenance record.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import model
from .discretize import QuadratureRule
from .model import CoercivityFn, LagrangianSpec, VariationalProblem

logger = logging.getLogger(__name__)

__all__ = [
    "EstimatorOptions",
    "RegularityConstants",
    "compute_r0",
    "compute_c",
    "max_over_omega",
    "select_T0_beta",
    "compute_eta",
    "compute_gamma_bar",
    "compute_varrho",
    "rh_holds",
    "compute_ell",
    "compute_KL",
    "compute_sigma_bar",
    "compute_all",
    "lemma1_margin",
    "thread_count",
]


def thread_count() -> int:
    """Worker count from VARIPATH_THREADS (0 or unset means one per CPU)."""
    try:
        k = int(os.environ.get("VARIPATH_THREADS", "0"))
    except ValueError:
        k = 0
    return k if k > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class EstimatorOptions:
    grid: int = 41
    safety: float = 0.05
    use_analytic: bool = True
    T0_grid: Tuple[float, float, int] = (0.03, 0.97, 32)
    r0_max: float = 1e9
    quad_order: int = 5
    quad_pieces: int = 16
    eta_points: int = 2001


@dataclass
class RegularityConstants:
    r0: float
    c: float
    Lambda0: float
    Lambda1: float
    T0: float
    beta: float
    eta: float
    gamma_bar: float
    Lambda2: float
    varrho: float
    ell: float
    K_L: float
    sigma_bar: float
    mu: float
    xi: float
    delta: float
    provenance: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def _directions(n: int, k: int) -> np.ndarray:
    """Deterministic unit vectors covering the sphere in R^n."""
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        a = np.linspace(0.0, 2 * np.pi, max(8, 4 * (k // 2)), endpoint=False)
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    rng = np.random.default_rng(12345)
    d = rng.standard_normal((k * k, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    eye = np.eye(n)
    return np.concatenate([eye, -eye, d])


def _ball_grid(n: int, radius: float, k: int) -> np.ndarray:
    if radius <= 0:
        return np.zeros((1, n))
    if n == 1:
        return np.linspace(-radius, radius, k)[:, None]
    radii = np.linspace(0.0, radius, (k + 1) // 2)[1:]
    d = _directions(n, k)
    pts = (radii[:, None, None] * d[None, :, :]).reshape(-1, n)
    return np.concatenate([np.zeros((1, n)), pts])


def _sphere_grid(n: int, radius: float, k: int) -> np.ndarray:
    return radius * _directions(n, k)


def _u_points(n: int, u_domain, k: int) -> np.ndarray:
    kind, arg = u_domain
    if kind == "fixed":
        return np.broadcast_to(np.asarray(arg, dtype=float), (n,)).reshape(1, n)
    if kind == "ball":
        return _ball_grid(n, float(arg), k)
    if kind == "sphere":
        return _sphere_grid(n, float(arg), k)
    raise ValueError(f"unknown u domain {kind!r}")


_BATCH_POINTS = 65536


def _inflate(v: float, safety: float) -> float:
    return v + safety * abs(v)


def max_over_omega(
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    c: float,
    n: int,
    u_domain=("fixed", 0.0),
    grid: int = 41,
    safety: float = 0.05,
) -> float:
    """Grid maximum of ``f(t, x, u)`` over t in [0,1], |x| <= c and the u-domain.

    ``u_domain`` is ``("fixed", u)``, ``("ball", r)`` or ``("sphere", r)``.
    The grid maximum is inflated by ``safety`` (relative); pass ``safety=0``
    for the raw value.
    """
    if grid < 2:
        raise ValueError("grid needs at least 2 points per axis")
    ts = np.linspace(0.0, 1.0, grid)
    xs = _ball_grid(n, c, grid)
    us = _u_points(n, u_domain, grid)
    X = np.repeat(xs, us.shape[0], axis=0)
    U = np.tile(us, (xs.shape[0], 1))

    def chunk(t_block: np.ndarray) -> float:
        T = np.repeat(t_block, X.shape[0])
        vals = f(T, np.tile(X, (t_block.size, 1)), np.tile(U, (t_block.size, 1)))
        return float(np.max(vals))

    # bounded batches keep the jet Hessians of one batch in memory
    per_t = max(1, _BATCH_POINTS // X.shape[0])
    blocks = np.array_split(ts, max(1, -(-ts.size // per_t)))
    workers = min(thread_count(), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            best = max(pool.map(chunk, blocks))
    else:
        best = max(chunk(b) for b in blocks)
    return _inflate(best, safety)


# ---------------------------------------------------------------------------
# the chain
# ---------------------------------------------------------------------------


def compute_r0(theta: CoercivityFn, r_max: float = 1e9) -> float:
    """Smallest grid value r0 with theta(r)/r >= 1 at every grid r >= r0."""
    top = math.log10(r_max)
    # exponents on a 1/64 lattice so powers of ten are hit exactly
    expo = -6.0 + np.arange(int(round((top + 6.0) * 64)) + 1) / 64.0
    r = np.concatenate([[0.0], 10.0**expo])
    th = theta(r)
    with np.errstate(divide="ignore"):
        ok = np.where(r > 0, th / np.where(r > 0, r, 1.0) >= 1.0, th > 0)
    if not ok[-1]:
        raise ValueError(f"theta(r)/r >= 1 is not attained for r up to {r_max:g}; theta is not coercive enough")
    bad = np.flatnonzero(~ok)
    return 0.0 if bad.size == 0 else float(r[bad[-1] + 1])


def compute_c(p: VariationalProblem, r0: float, quad: QuadratureRule = QuadratureRule(), pieces: int = 16) -> float:
    """r0 plus the action of the straight line t -> t a."""
    a = p.a

    def integrand(t):
        return p.lagrangian.value(t, t[..., None] * a, np.broadcast_to(a, t.shape + (p.n,)))

    return float(r0 + quad.integrate(integrand, pieces=pieces))


def _Lambda0_fn(L: LagrangianSpec):
    return lambda t, x, u: L.value(t, x, u)


def _Lambda1_fn(L: LagrangianSpec):
    n = L.n
    return lambda t, x, u: np.linalg.norm(L.jet(t, x, u).grad[..., 1 + n :], axis=-1)


def _sigma_fn(L: LagrangianSpec):
    n = L.n

    def f(t, x, u):
        j = L.jet(t, x, u)
        return np.sum(j.grad[..., 1 + n :] * u, axis=-1) - j.value

    return f


def _KL_fn(L: LagrangianSpec):
    return lambda t, x, u: np.linalg.norm(L.jet(t, x, u).grad, axis=-1)


def select_T0_beta(
    p: VariationalProblem,
    c: float,
    sigma_fn: Callable[[float], float],
    ell_fn: Optional[Callable[[float, float], float]] = None,
    grid: Sequence[float] = tuple(np.linspace(0.03, 0.97, 32)),
) -> Tuple[float, float]:
    """Pick 0 < T0 < 1 with beta = sigma((c+1)/T0) > delta/xi.

    With ``ell_fn`` the admissible T0 giving the smallest resulting bound is
    returned; without it, the admissible T0 with the smallest beta.
    """
    floor = p.reg.delta / p.reg.xi
    best = None
    for T0 in grid:
        T0 = float(T0)
        if not 0.0 < T0 < 1.0:
            raise ValueError("T0 grid must lie inside (0, 1)")
        beta = float(sigma_fn((c + 1.0) / T0))
        if not beta > floor:
            continue
        score = ell_fn(T0, beta) if ell_fn is not None else beta
        if best is None or score < best[0]:
            best = (score, T0, beta)
    if best is None:
        raise ValueError(
            f"no T0 in the grid gives sigma((c+1)/T0) > delta/xi = {floor:g}; sigma grows too slowly"
        )
    return best[1], best[2]


def compute_eta(theta: CoercivityFn, beta: float, points: int = 2001) -> float:
    """sup_{r >= 0} r / (theta(r) + beta) by log grid plus local refinement."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    r = np.concatenate([[0.0], np.logspace(-9, 9, points)])
    vals = r / (theta(r) + beta)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda s: -float(s / (theta(s) + beta)), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12 * max(hi, 1.0)},
        )
        best = max(best, -float(res.fun))
    return best


def compute_gamma_bar(eta: float, xi: float, c: float, T0: float, beta: float) -> float:
    return math.exp(eta * xi * (c + T0 * beta))


def rh_holds(r: float, mu: float, Lambda0: float, Lambda1: float, Lambda2: float, beta: float) -> bool:
    """Direct evaluation of the threshold inequality defining varrho at ``r``."""
    den = 0.5 * mu * r * r - Lambda1 * r - Lambda0 + beta
    return bool(den > 0 and r / den < 1.0 / (Lambda2 + beta))


def compute_varrho(mu: float, Lambda0: float, Lambda1: float, Lambda2: float, beta: float) -> float:
    """Threshold beyond which r / (mu r^2/2 - Lambda1 r - Lambda0 + beta) < 1/(Lambda2 + beta).

    For Lambda2 + beta > 0 the condition is equivalent to the quadratic
    (mu/2) r^2 - (Lambda1 + Lambda2 + beta) r + (beta - Lambda0) > 0, so the
    threshold is its larger root (0 when it has none on r >= 0).
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if Lambda2 + beta <= 0:
        raise ValueError("Lambda2 + beta must be positive")
    a = 0.5 * mu
    b = -(Lambda1 + Lambda2 + beta)
    cc = beta - Lambda0
    disc = b * b - 4 * a * cc
    if disc < 0:
        return 0.0
    root = (-b + math.sqrt(disc)) / (2 * a)
    return max(0.0, root * (1.0 + 1e-9))


def compute_ell(varrho: float, mu: float, Lambda0: float, Lambda1: float, beta: float) -> float:
    """max{varrho, sqrt((2/mu)(Lambda0 + beta)), (Lambda1 + sqrt(Lambda1^2 + 4 mu Lambda0))/2}."""
    return max(
        varrho,
        math.sqrt(max(0.0, 2.0 / mu * (Lambda0 + beta))),
        (Lambda1 + math.sqrt(max(0.0, Lambda1 * Lambda1 + 4 * mu * Lambda0))) / 2.0,
    )


def compute_KL(
    L: LagrangianSpec, ell: float, grid: int = 41, safety: float = 0.05, use_analytic: bool = True
) -> Tuple[float, Dict[str, Any]]:
    """Max of |grad_{(t,x,u)} L| over t in [0,1], |x| <= ell, |u| <= ell."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    bounds = L.bounds if use_analytic else None
    v = bounds.K_L(ell) if bounds is not None else None
    if v is not None:
        return float(v), {"method": "analytic"}
    v = max_over_omega(_KL_fn(L), ell, L.n, ("ball", ell), grid, safety)
    return v, {"method": "grid", "grid": grid, "safety": safety}


def compute_sigma_bar(L: LagrangianSpec, K_L: float, ell: float) -> float:
    """L(0,0,0) + K_L (1 + 2 ell)."""
    zero = np.zeros(L.n)
    return model.eval(L, 0.0, zero, zero) + K_L * (1.0 + 2.0 * ell)


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------


class _Maxima:
    """Lambda0, Lambda1, sigma(r), Lambda2 with analytic preference."""

    def __init__(self, p: VariationalProblem, c: float, opts: EstimatorOptions):
        self.L = p.lagrangian
        self.n = p.n
        self.c = c
        self.opts = opts
        self.bounds = self.L.bounds if opts.use_analytic else None

    def _grid(self, f, u_domain):
        return max_over_omega(f, self.c, self.n, u_domain, self.opts.grid, self.opts.safety)

    def _prov(self, analytic: bool) -> Dict[str, Any]:
        if analytic:
            return {"method": "analytic"}
        return {"method": "grid", "grid": self.opts.grid, "safety": self.opts.safety}

    def get(self, name: str, *args) -> Tuple[float, Dict[str, Any]]:
        b = self.bounds
        if b is not None:
            v = getattr(b, name)(*args, self.c)
            if v is not None:
                return float(v), self._prov(True)
        zero = ("fixed", np.zeros(self.n))
        if name == "Lambda0":
            v = self._grid(_Lambda0_fn(self.L), zero)
        elif name == "Lambda1":
            v = self._grid(_Lambda1_fn(self.L), zero)
        elif name == "sigma":
            v = self._grid(_sigma_fn(self.L), ("ball", args[0]))
        elif name == "Lambda2":
            v = self._grid(_Lambda0_fn(self.L), ("sphere", args[0]))
        else:
            raise KeyError(name)
        return v, self._prov(False)


def compute_all(p: VariationalProblem, options: EstimatorOptions = EstimatorOptions()) -> RegularityConstants:
    """Every constant of the chain, with provenance."""
    opts = options
    mu, xi, delta = p.reg.mu, p.reg.xi, p.reg.delta
    prov: Dict[str, Dict[str, Any]] = {}

    r0 = compute_r0(p.theta, opts.r0_max)
    prov["r0"] = {"method": "grid", "formula": "theta(r)/r >= 1 for r >= r0", "r_max": opts.r0_max}
    c = compute_c(p, r0, QuadratureRule(opts.quad_order), opts.quad_pieces)
    prov["c"] = {
        "method": "quadrature",
        "formula": "r0 + int_0^1 L(t, t a, a) dt",
        "order": opts.quad_order,
        "pieces": opts.quad_pieces,
    }

    mx = _Maxima(p, c, opts)
    Lambda0, prov["Lambda0"] = mx.get("Lambda0")
    prov["Lambda0"]["formula"] = "max_{Omega} L(t, x, 0)"
    Lambda1, prov["Lambda1"] = mx.get("Lambda1")
    prov["Lambda1"]["formula"] = "max_{Omega} |grad_u L(t, x, 0)|"

    sigma_cache: Dict[float, float] = {}

    def sigma_fn(r: float) -> float:
        if r not in sigma_cache:
            sigma_cache[r] = mx.get("sigma", r)[0]
        return sigma_cache[r]

    def tail(T0: float, beta: float) -> Dict[str, Any]:
        eta = compute_eta(p.theta, beta, opts.eta_points)
        gamma_bar = compute_gamma_bar(eta, xi, c, T0, beta)
        Lambda2, l2prov = mx.get("Lambda2", gamma_bar + 1.0)
        varrho = compute_varrho(mu, Lambda0, Lambda1, Lambda2, beta)
        ell = compute_ell(varrho, mu, Lambda0, Lambda1, beta)
        return dict(eta=eta, gamma_bar=gamma_bar, Lambda2=Lambda2, l2prov=l2prov, varrho=varrho, ell=ell)

    tails: Dict[Tuple[float, float], Dict[str, Any]] = {}

    def ell_fn(T0: float, beta: float) -> float:
        tails[(T0, beta)] = tail(T0, beta)
        return tails[(T0, beta)]["ell"]

    lo, hi, k = opts.T0_grid
    T0, beta = select_T0_beta(p, c, sigma_fn, ell_fn, tuple(np.linspace(lo, hi, k)))
    rest = tails[(T0, beta)]
    prov["T0"] = {"method": "grid", "formula": "argmin of ell over admissible T0", "grid": [lo, hi, k]}
    prov["beta"] = {"formula": "sigma((c + 1)/T0)", **mx.get("sigma", (c + 1.0) / T0)[1]}
    prov["eta"] = {"method": "grid+refine", "formula": "sup_r r/(theta(r) + beta)", "points": opts.eta_points}
    prov["gamma_bar"] = {"method": "closed_form", "formula": "exp(eta xi (c + T0 beta))"}
    prov["Lambda2"] = {"formula": "max_{Omega, |u| = gamma_bar + 1} L", **rest["l2prov"]}
    prov["varrho"] = {"method": "closed_form", "formula": "larger root of (mu/2) r^2 - (Lambda1+Lambda2+beta) r + beta - Lambda0"}
    prov["ell"] = {"method": "closed_form", "formula": "max{varrho, sqrt(2(Lambda0+beta)/mu), (Lambda1+sqrt(Lambda1^2+4 mu Lambda0))/2}"}

    ell = rest["ell"]
    K_L, prov["K_L"] = compute_KL(p.lagrangian, ell, opts.grid, opts.safety, opts.use_analytic)
    prov["K_L"]["formula"] = "max_{t in [0,1], |x| <= ell, |u| <= ell} |grad_{(t,x,u)} L|"
    sigma_bar = compute_sigma_bar(p.lagrangian, K_L, ell)
    prov["sigma_bar"] = {"method": "closed_form", "formula": "L(0,0,0) + K_L (1 + 2 ell)"}

    consts = RegularityConstants(
        r0=r0,
        c=c,
        Lambda0=Lambda0,
        Lambda1=Lambda1,
        T0=T0,
        beta=beta,
        eta=rest["eta"],
        gamma_bar=rest["gamma_bar"],
        Lambda2=rest["Lambda2"],
        varrho=rest["varrho"],
        ell=ell,
        K_L=K_L,
        sigma_bar=sigma_bar,
        mu=mu,
        xi=xi,
        delta=delta,
        provenance=prov,
    )
    logger.info("ell = %.6g, K_L = %.6g, sigma_bar = %.6g", ell, K_L, sigma_bar)
    return consts


def lemma1_margin(p: VariationalProblem, consts: RegularityConstants, t, x, u) -> np.ndarray:
    """L(t,x,u) - (-Lambda0 - Lambda1 |u| + (mu/2)|u|^2); nonnegative on Omega."""
    u = np.asarray(u, dtype=float)
    nu = np.linalg.norm(u, axis=-1)
    lower = -consts.Lambda0 - consts.Lambda1 * nu + 0.5 * consts.mu * nu * nu
    return p.lagrangian.value(t, x, u) - lower
