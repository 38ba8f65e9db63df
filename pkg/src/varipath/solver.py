"""Short-step path following on the discretized problem.

The method tracks minimizers of ``alpha * sigma + F(u, sigma)`` while
``alpha`` grows:

    alpha_{k+1} = alpha_k + gamma / ||v||_{z_k}
    z_{k+1}     = z_k - [F''(z_k)]^{-1} (alpha_{k+1} v + F'(z_k))

starting from a point whose Newton decrement is at most ``kappa``, and stops
once ``nu + (kappa + sqrt(nu)) kappa / (1 - kappa) <= epsilon * alpha_k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .barrier import Barrier, BarrierPoint, local_norm, newton_step, spd_factor
from .discretize import PiecewiseConstantControl, QuadratureRule, objective_P, required_N
from .errors import InfeasibleError, IterationLimitError
from .estimator import RegularityConstants
from .model import VariationalProblem

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "SolveReport",
    "default_gamma",
    "predicted_iterations",
    "stop_threshold",
    "initial_point",
    "center",
    "path_follow",
]


def default_gamma(kappa: float) -> float:
    return math.sqrt(kappa) / (1.0 + math.sqrt(kappa)) - kappa


@dataclass
class SolverConfig:
    epsilon: float = 0.1
    kappa: float = 0.25
    gamma: Optional[float] = None
    nu: Optional[float] = None
    N: Optional[int] = None
    max_N: Optional[int] = None
    max_iters: Optional[int] = None
    centering_max_iters: int = 500
    quad_order: int = 5
    literal_endpoint: bool = False
    interior_shift: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.gamma is None:
            self.gamma = default_gamma(self.kappa)
        if not 0.0 < self.gamma <= default_gamma(self.kappa) + 1e-15:
            raise ValueError("gamma must satisfy 0 < gamma <= sqrt(kappa)/(1+sqrt(kappa)) - kappa")

    @property
    def centering_tol(self) -> float:
        return self.kappa

    def nu_for(self, m: int, n: int, N: int) -> float:
        return float(self.nu) if self.nu is not None else float(m + n * N + 1)


@dataclass
class SolveReport:
    iterations: int
    predicted_N_iters: int
    objective: float
    control: PiecewiseConstantControl
    sigma_final: float
    alpha_final: float
    N: int
    N_required: int
    nu: float
    centering_steps: int
    init: Dict[str, Any] = field(default_factory=dict)
    guarantee_residuals: Dict[str, Any] = field(default_factory=dict)
    trace: List[Dict[str, float]] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "predicted_N_iters": self.predicted_N_iters,
            "objective": self.objective,
            "sigma_final": self.sigma_final,
            "alpha_final": self.alpha_final,
            "N": self.N,
            "N_required": self.N_required,
            "grid_condition_met": self.N >= self.N_required,
            "nu": self.nu,
            "centering_steps": self.centering_steps,
            "control": self.control.values.tolist(),
            "init": self.init,
            "guarantee_residuals": self.guarantee_residuals,
            "trace": self.trace,
            "config": self.config,
        }


def stop_threshold(nu: float, kappa: float) -> float:
    """Left side of the stopping rule: nu + (kappa + sqrt(nu)) kappa / (1 - kappa)."""
    return nu + (kappa + math.sqrt(nu)) * kappa / (1.0 - kappa)


def predicted_iterations(
    m: int,
    n: int,
    N: int,
    epsilon: float,
    cfg: SolverConfig,
    sigma_bar: float,
) -> int:
    """A-priori iteration bound with ||v|| <= sigma_bar / sqrt(2) at the analytic center."""
    kappa, gamma = cfg.kappa, cfg.gamma
    if kappa >= 0.5:
        raise ValueError("the iteration bound needs kappa < 1/2")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    nu = cfg.nu_for(m, n, N)
    sq = math.sqrt(nu)
    num = math.log(
        math.sqrt(2.0) * ((1.0 + kappa) * nu + (kappa + sq) * kappa) / (gamma * (1.0 - 2.0 * kappa) * epsilon) * sigma_bar
    )
    den = math.log1p(gamma / (kappa + sq))
    return int(math.ceil(num / den + 1.0))


def _interior_point(bar: Barrier) -> np.ndarray:
    """Constant control with the largest uniform slack in the end-point and box constraints."""
    n, N = bar.n, bar.N
    scale = 1.0 if bar.literal_endpoint else 1.0 / N
    # variables (w, s): constant control w, common slack s; maximize s
    A = bar.A * (scale * N)
    m = A.shape[0]
    A_ub = np.block(
        [
            [A, np.ones((m, 1))],
            [np.eye(n), np.ones((n, 1))],
            [-np.eye(n), np.ones((n, 1))],
        ]
    )
    b_ub = np.concatenate([bar.b, np.full(n, bar.ell), np.full(n, bar.ell)])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        raise InfeasibleError("the end-point set and velocity box have no common interior point")
    return res.x[:n]


def initial_point(
    problem: VariationalProblem,
    constants: RegularityConstants,
    N: int,
    cfg: Optional[SolverConfig] = None,
) -> Tuple[BarrierPoint, Dict[str, Any]]:
    """Strictly feasible (u0, sigma0) built from the straight line t -> t a."""
    cfg = cfg or SolverConfig()
    bar = Barrier(problem, constants.ell, constants.sigma_bar, N, QuadratureRule(cfg.quad_order), cfg.literal_endpoint)
    scale = 1.0 if cfg.literal_endpoint else 1.0 / N
    # constant control reaching a at t = 1
    w = problem.a / (scale * N)
    info: Dict[str, Any] = {"adjusted": False}

    def strict(wc: np.ndarray) -> bool:
        u = np.tile(wc, N)
        return bool(np.all(bar.b - bar.E @ u > 0) and np.all(np.abs(wc) < bar.ell))

    if not strict(w):
        z = _interior_point(bar)
        theta = cfg.interior_shift
        while not strict((1.0 - theta) * w + theta * z):
            theta = min(1.0, 2.0 * theta)
            if theta == 1.0 and not strict(z):
                raise InfeasibleError("no strictly feasible control found")
        w = (1.0 - theta) * w + theta * z
        info = {"adjusted": True, "shift": theta, "interior_point": z.tolist()}
    u0 = np.tile(w, N)
    P0 = objective_P(bar.control(u0), bar.L, bar.quad)
    if not P0 < bar.sigma_bar:
        raise InfeasibleError(f"P(u0) = {P0:.6g} is not below sigma_bar = {bar.sigma_bar:.6g}")
    info["u0"] = w.tolist()
    info["P0"] = P0
    return BarrierPoint(u0, 0.5 * (P0 + bar.sigma_bar)), info


def center(bar: Barrier, pt: BarrierPoint, cfg: SolverConfig):
    """Damped Newton on F until the decrement is at most kappa.

    Returns the centered point, the number of steps and the decrement history.
    """
    z = pt.z
    history: List[float] = []
    for k in range(cfg.centering_max_iters + 1):
        ev = bar.evaluate(z)
        fac = spd_factor(ev.hess)
        step, lam = newton_step(fac, ev.grad, 0.0)
        history.append(lam)
        if lam < 0.25 and len(history) > 1 and history[-2] < 0.25 and not lam < history[-2]:
            logger.warning("centering decrement did not decrease: %.3g -> %.3g", history[-2], lam)
        if lam <= cfg.centering_tol:
            return BarrierPoint.from_z(z), k, history
        if k == cfg.centering_max_iters:
            break
        z = z + step / (1.0 + lam)
    raise IterationLimitError(f"centering did not reach decrement {cfg.centering_tol} in {cfg.centering_max_iters} steps")


def path_follow(
    problem: VariationalProblem,
    constants: RegularityConstants,
    cfg: Optional[SolverConfig] = None,
    reference=None,
) -> SolveReport:
    """Run the path-following method and report the final control.

    ``reference`` (a :class:`varipath.verify.ReferenceSolution`) adds the
    guarantee residuals to the report.
    """
    cfg = cfg or SolverConfig()
    n, m = problem.n, problem.m
    N_required = required_N(cfg.epsilon, constants.ell, constants.K_L)
    N = cfg.N if cfg.N is not None else N_required
    if cfg.N is None and cfg.max_N is not None and N > cfg.max_N:
        logger.warning("required grid size %d exceeds the cap %d; solving on the capped grid", N, cfg.max_N)
        N = cfg.max_N
    quad = QuadratureRule(cfg.quad_order)
    bar = Barrier(problem, constants.ell, constants.sigma_bar, N, quad, cfg.literal_endpoint)
    nu = cfg.nu_for(m, n, N)
    predicted = predicted_iterations(m, n, N, cfg.epsilon, cfg, constants.sigma_bar)
    max_iters = cfg.max_iters if cfg.max_iters is not None else 10 * predicted
    threshold = stop_threshold(nu, cfg.kappa)

    pt0, info = initial_point(problem, constants, N, cfg)
    pt, csteps, chist = center(bar, pt0, cfg)
    info["centering_decrements"] = chist

    z = pt.z
    e = np.zeros(z.size)
    e[-1] = 1.0
    alpha = 0.0
    k = 0
    trace: List[Dict[str, float]] = []

    def report(z: np.ndarray) -> SolveReport:
        u = bar.control(z[:-1])
        return SolveReport(
            iterations=k,
            predicted_N_iters=predicted,
            objective=objective_P(u, bar.L, quad),
            control=u,
            sigma_final=float(z[-1]),
            alpha_final=alpha,
            N=N,
            N_required=N_required,
            nu=nu,
            centering_steps=csteps,
            init=info,
            trace=trace,
            config={**asdict(cfg), "N": N, "nu": nu, "max_iters": max_iters},
        )

    while not threshold <= cfg.epsilon * alpha:
        if k >= max_iters:
            raise IterationLimitError(f"no termination within {max_iters} iterations", report(z))
        ev = bar.evaluate(z)
        fac = spd_factor(ev.hess)
        proximity = newton_step(fac, ev.grad, alpha)[1]
        vnorm = local_norm(e, fac)
        alpha_next = alpha + cfg.gamma / vnorm
        if not alpha_next > alpha:
            raise ArithmeticError("alpha failed to increase")
        step, decrement = newton_step(fac, ev.grad, alpha_next)
        z = z + step
        bar.check_domain(z)
        alpha = alpha_next
        k += 1
        trace.append(
            {"alpha": alpha, "proximity": proximity, "decrement": decrement, "sigma": float(z[-1]), "v_norm": vnorm}
        )
    rep = report(z)
    if reference is not None:
        from .verify import error_metrics

        rep.guarantee_residuals = error_metrics(rep.control, reference, problem.reg.mu, quad)
    logger.info("path following: %d iterations (bound %d), P = %.10g", k, predicted, rep.objective)
    return rep
