"""Command-line entry point: ``varipath {estimate,solve,verify}``.

Exit codes: 0 success, 1 malformed configuration, 2 infeasible start,
3 iteration cap reached, 4 condition validation failed, 5 a verified
guarantee failed.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from .discretize import write_trajectory_csv
from .errors import FactorizationError, DomainError, InfeasibleError, IterationLimitError
from .estimator import EstimatorOptions, compute_all
from .model import load_problem, problem_to_dict, validate_conditions
from .solver import SolverConfig, path_follow

logger = logging.getLogger("varipath")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ITERS, EXIT_VALIDATION, EXIT_GUARANTEE = range(6)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _write(path: Optional[str], payload: Dict[str, Any]) -> None:
    text = dumps(payload)
    if path:
        with open(path, "w") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varipath", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp, problem_required=True):
        sp.add_argument("--problem", required=problem_required, help="problem JSON document")
        sp.add_argument("--out", help="write the JSON report here")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled condition checks")
        sp.add_argument("--validation-samples", type=int, default=1000)
        sp.add_argument("--validation-radius", type=float, default=10.0)
        sp.add_argument("--skip-validation", action="store_true")
        sp.add_argument("--grid", type=int, default=41, help="grid points per axis for global maxima")
        sp.add_argument("--no-analytic", action="store_true", help="ignore family closed forms")

    est = sub.add_parser("estimate", help="compute the regularity constants")
    common(est)

    sol = sub.add_parser("solve", help="run the path-following method")
    common(sol)
    sol.add_argument("--epsilon", type=float, default=0.1)
    sol.add_argument("--kappa", type=float, default=0.25)
    sol.add_argument("--gamma", type=float)
    sol.add_argument("--N", type=int, dest="N", help="grid size (default: the required size)")
    sol.add_argument("--max-N", type=int, default=1024, help="cap on the default grid size")
    sol.add_argument("--nu", type=float, help="barrier parameter in the stop rule and bound")
    sol.add_argument("--max-iters", type=int)
    sol.add_argument("--literal-endpoint", action="store_true", help="omit tau in the end-point barrier term")
    sol.add_argument("--trajectory", help="write the trajectory CSV here")
    sol.add_argument("--samples-per-interval", type=int, default=4)

    ver = sub.add_parser("verify", help="run the benchmark guarantee suite")
    common(ver, problem_required=False)
    ver.add_argument("--epsilons", type=float, nargs="+", default=[0.5, 0.1, 0.02])
    ver.add_argument("--N", type=int, dest="N", default=32)
    ver.add_argument("--B", type=float, default=1.0)
    return p


def _estimator_options(args) -> EstimatorOptions:
    return EstimatorOptions(grid=args.grid, use_analytic=not args.no_analytic)


def _config_record(args) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}


def _validate(args, problem, report: Dict[str, Any]) -> bool:
    if args.skip_validation:
        report["validation"] = "skipped"
        return True
    v = validate_conditions(problem, args.validation_samples, args.validation_radius, args.seed)
    report["validation"] = v.to_dict()
    return v.passed


def _estimate(args) -> int:
    problem = load_problem(args.problem)
    report: Dict[str, Any] = {"config": _config_record(args), "problem": problem_to_dict(problem)}
    if not _validate(args, problem, report):
        _write(args.out, report)
        print("condition validation failed", file=sys.stderr)
        return EXIT_VALIDATION
    consts = compute_all(problem, _estimator_options(args))
    report["constants"] = consts.to_dict()
    _write(args.out, report)
    for name, value in consts.to_dict().items():
        if name != "provenance":
            print(f"{name} = {value!r}")
    return EXIT_OK


def _solve(args) -> int:
    problem = load_problem(args.problem)
    report: Dict[str, Any] = {"config": _config_record(args), "problem": problem_to_dict(problem)}
    if not _validate(args, problem, report):
        _write(args.out, report)
        print("condition validation failed", file=sys.stderr)
        return EXIT_VALIDATION
    consts = compute_all(problem, _estimator_options(args))
    report["constants"] = consts.to_dict()
    cfg = SolverConfig(
        epsilon=args.epsilon,
        kappa=args.kappa,
        gamma=args.gamma,
        nu=args.nu,
        N=args.N,
        max_N=args.max_N,
        max_iters=args.max_iters,
        literal_endpoint=args.literal_endpoint,
    )
    try:
        rep = path_follow(problem, consts, cfg)
    except InfeasibleError as exc:
        report["error"] = str(exc)
        _write(args.out, report)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IterationLimitError as exc:
        report["error"] = str(exc)
        if exc.report is not None:
            report["solve"] = exc.report.to_dict()
        _write(args.out, report)
        print(f"iteration cap: {exc}", file=sys.stderr)
        return EXIT_ITERS
    report["solve"] = rep.to_dict()
    _write(args.out, report)
    if args.trajectory:
        write_trajectory_csv(args.trajectory, rep.control, args.samples_per_interval)
    print(f"iterations = {rep.iterations} (bound {rep.predicted_N_iters})")
    print(f"objective = {rep.objective!r}")
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_benchmarks

    summary = run_benchmarks(tuple(args.epsilons), args.N, args.B, _estimator_options(args))
    report = {"config": _config_record(args), "summary": summary}
    _write(args.out, report)
    for r in summary["runs"]:
        status = "PASS" if all(r["pass"].values()) else "FAIL"
        print(f"{status} eps={r['epsilon']:g} iterations={r['iterations']}/{r['predicted']} gap={r['objective_gap']:.3e}")
    return EXIT_OK if summary["passed"] else EXIT_GUARANTEE


def _thread_limit():
    try:
        k = int(os.environ.get("VARIPATH_THREADS", "0"))
    except ValueError:
        k = 0
    if k <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=k)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handlers = {"estimate": _estimate, "solve": _solve, "verify": _verify}
    try:
        with _thread_limit():
            return handlers[args.subcommand](args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        if isinstance(exc, (DomainError,)):
            print(f"domain violation: {exc}", file=sys.stderr)
            return EXIT_ITERS
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FactorizationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_ITERS


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
