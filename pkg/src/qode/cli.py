"""Command-line entry point: instance generation, fixed-point solving,
decay certification, stochastic runs, and the property-verification battery.

Exit status taxonomy: 0 success, 1 usage or validation problem,
2 non-convergence, 3 property violation.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys

import numpy as np

from . import __version__
from .exceptions import InadmissiblePError, QodeError
from .fixed_point import solve_fixed_point
from .learner import (
    AnnealSchedule,
    StepSizeSchedule,
    noise_report,
    run_annealed_boltzmann,
    run_learning,
    save_run_csv,
    validate_schedule,
)
from .mdp import build_sampling_distribution, load_mdp, random_mdp, save_mdp
from .ode import certify_decay, integrate, mdp_ode_system, save_trajectory_csv
from .operators import MAX_OP, OperatorKind
from .verify import run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_PROPERTY_VIOLATION = 3

_OPERATORS = ("max", "lse", "mellowmax", "boltzmann")


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._fail(message))

    def _fail(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _operator_kind(name: str, temperature: float) -> OperatorKind:
    return MAX_OP if name == "max" else OperatorKind(name, temperature)


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Overlay a JSON config under explicit flags (flags win on conflict)."""
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise QodeError(f"config key {key!r} does not match any flag")
        if attr not in args._explicit:
            setattr(args, attr, value)
    return args


class _TrackingAction(argparse.Action):
    """Records which flags were given explicitly, for config-file merging."""

    def __call__(self, parser, namespace, values, option_string=None):
        if not hasattr(namespace, "_explicit"):
            namespace._explicit = set()
        namespace._explicit.add(self.dest)
        setattr(namespace, self.dest, values)


def _add(parser, flag, **kwargs):
    if "action" not in kwargs and not kwargs.get("_plain"):
        kwargs["action"] = _TrackingAction
    kwargs.pop("_plain", None)
    parser.add_argument(flag, **kwargs)


def build_parser() -> _Parser:
    parser = _Parser(prog="qode", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qode {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-mdp", help="generate a random MDP instance file")
    _add(g, "--states", type=int, required=True)
    _add(g, "--actions", type=int, required=True)
    _add(g, "--gamma", type=float, default=0.9)
    _add(g, "--seed", type=int, default=0)
    _add(g, "--reward-min", type=float, default=0.0)
    _add(g, "--reward-max", type=float, default=1.0)
    _add(g, "--sparsity", type=float, default=0.0)
    _add(g, "--out", required=True)
    _add(g, "--config", default=None)

    s = sub.add_parser("solve", help="solve an operator fixed point")
    _add(s, "--mdp", required=True)
    _add(s, "--operator", choices=_OPERATORS, default="max")
    _add(s, "--temperature", type=float, default=1.0)
    _add(s, "--tol", type=float, default=1e-10)
    _add(s, "--max-iter", type=int, default=100_000)
    _add(s, "--out", default=None)
    _add(s, "--config", default=None)

    o = sub.add_parser("ode", help="integrate the mean-field flow and certify decay")
    _add(o, "--mdp", required=True)
    _add(o, "--operator", choices=_OPERATORS, default="max")
    _add(o, "--temperature", type=float, default=1.0)
    _add(o, "--p", default="auto")
    _add(o, "--t-end", type=float, default=20.0)
    _add(o, "--h", type=float, default=1e-3)
    _add(o, "--scheme", choices=("rk4", "euler"), default="rk4")
    _add(o, "--stride", type=int, default=1)
    _add(o, "--q0-seed", type=int, default=None,
         help="seed for a random start (default: start at zero)")
    _add(o, "--tol-int", type=float, default=1e-6)
    _add(o, "--traj-out", default=None)
    _add(o, "--cert-out", default=None)
    _add(o, "--config", default=None)

    l = sub.add_parser("learn", help="run the stochastic update recursion")
    _add(l, "--mdp", required=True)
    _add(l, "--operator", choices=_OPERATORS, default="max")
    _add(l, "--temperature", type=float, default=1.0)
    _add(l, "--steps-a", type=float, default=10.0)
    _add(l, "--steps-b", type=float, default=100.0)
    _add(l, "--steps-q", type=float, default=1.0)
    _add(l, "--steps-cap", type=float, default=0.5)
    _add(l, "--iters", type=int, default=200_000)
    _add(l, "--seed", type=int, default=0)
    _add(l, "--stride", type=int, default=1000)
    _add(l, "--anneal", action="store_true", default=False)
    _add(l, "--anneal-lambda0", type=float, default=1.0)
    _add(l, "--anneal-growth", choices=("power", "geometric"), default="power")
    _add(l, "--anneal-rate", type=float, default=0.6)
    _add(l, "--out", default=None)
    _add(l, "--config", default=None)

    v = sub.add_parser("verify", help="run the property-verification battery")
    _add(v, "--suite", choices=("norms", "operators", "contraction", "ode",
                                "learning", "all"), required=True)
    _add(v, "--trials", type=int, default=1000)
    _add(v, "--seed", type=int, default=0)
    _add(v, "--out", default=None)
    _add(v, "--config", default=None)
    return parser


def _cmd_gen_mdp(args) -> int:
    mdp = random_mdp(
        args.states, args.actions, seed=args.seed,
        reward_range=(args.reward_min, args.reward_max),
        sparsity=args.sparsity, gamma=args.gamma,
    )
    save_mdp(mdp, args.out)
    dist = build_sampling_distribution(mdp)
    print(args.out)
    print(
        f"|S|={mdp.n_states} |A|={mdp.n_actions} gamma={mdp.gamma} "
        f"min_d={float(dist.joint.min()):.6g}"
    )
    return EXIT_OK


def _cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp)
    kind = _operator_kind(args.operator, args.temperature)
    result = solve_fixed_point(mdp, kind, tol=args.tol, max_iter=args.max_iter)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh)
            fh.write("\n")
    print(
        f"operator={args.operator} iterations={result.iterations} "
        f"residual={result.residual:.6e} converged={result.converged}"
    )
    if not result.converged:
        print(
            f"did not converge within {args.max_iter} iterations "
            f"(residual {result.residual:.3e}); fixed-temperature Boltzmann has no "
            "convergence guarantee",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cmd_ode(args) -> int:
    mdp = load_mdp(args.mdp)
    kind = _operator_kind(args.operator, args.temperature)
    fp = solve_fixed_point(mdp, kind)
    if not fp.converged:
        print("fixed-point solve did not converge; cannot certify", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    system = mdp_ode_system(mdp, kind)
    if args.q0_seed is None:
        q0 = np.zeros(system.n)
    else:
        q0 = np.random.default_rng(args.q0_seed).uniform(-5.0, 5.0, system.n)
    traj = integrate(system, q0, t_end=args.t_end, h=args.h,
                     scheme=args.scheme, stride=args.stride)
    p = args.p if args.p == "auto" else int(args.p)
    cert = certify_decay(traj, fp.q_star, system, p=p, tol_int=args.tol_int)
    if args.traj_out:
        save_trajectory_csv(traj, args.traj_out)
    if args.cert_out:
        with open(args.cert_out, "w", encoding="utf-8") as fh:
            json.dump(cert.to_dict(), fh)
            fh.write("\n")
    print(
        f"p={cert.p} rate={cert.rate:.6e} max_violation={cert.max_violation:.3e} "
        f"passed={cert.passed}"
    )
    return EXIT_OK if cert.passed else EXIT_PROPERTY_VIOLATION


def _cmd_learn(args) -> int:
    mdp = load_mdp(args.mdp)
    steps = StepSizeSchedule(args.steps_a, args.steps_b, args.steps_q, args.steps_cap)
    verdict = validate_schedule(steps)
    if not verdict.accepted:
        print(f"step-size schedule rejected: {verdict.reason}", file=sys.stderr)
        return EXIT_USAGE
    if args.anneal:
        if args.operator != "boltzmann":
            print("--anneal requires --operator boltzmann", file=sys.stderr)
            return EXIT_USAGE
        anneal = AnnealSchedule(args.anneal_lambda0, args.anneal_growth, args.anneal_rate)
        run = run_annealed_boltzmann(mdp, steps, anneal, K=args.iters, seed=args.seed,
                                     snapshot_stride=args.stride)
    else:
        kind = _operator_kind(args.operator, args.temperature)
        if kind.name == "boltzmann":
            print(
                "fixed-temperature Boltzmann: convergence not guaranteed by theory",
                file=sys.stderr,
            )
            ref = solve_fixed_point(mdp, MAX_OP).q_star
        else:
            ref = solve_fixed_point(mdp, kind).q_star
        run = run_learning(mdp, kind, steps, K=args.iters, seed=args.seed,
                           q_ref=ref, snapshot_stride=args.stride)
    if args.out:
        save_run_csv(run, args.out)
    report = noise_report(run)
    print(
        f"final_error={float(run.error_series[-1]):.6e} "
        f"martingale_ok={report.martingale_ok} moment_ok={report.moment_ok}"
        + (
            f" residual_ok={report.residual_ok}"
            if report.residual_ok is not None
            else ""
        )
    )
    return EXIT_OK if report.all_ok else EXIT_PROPERTY_VIOLATION


def _cmd_verify(args) -> int:
    if args.trials < 1:
        print("--trials must be a positive integer", file=sys.stderr)
        return EXIT_USAGE
    checks = run_suite(args.suite, args.trials, args.seed)
    report = {
        "suite": args.suite,
        "trials": args.trials,
        "seed": args.seed,
        "platform": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "machine": platform.machine(),
            "system": platform.system(),
        },
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} "
              f"trials={c.trials} worst_slack={c.worst_slack:.3e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    print(f"suite={args.suite} passed={report['passed']}")
    return EXIT_OK if report["passed"] else EXIT_PROPERTY_VIOLATION


_HANDLERS = {
    "gen-mdp": _cmd_gen_mdp,
    "solve": _cmd_solve,
    "ode": _cmd_ode,
    "learn": _cmd_learn,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "_explicit"):
        args._explicit = set()
    try:
        args = _merge_config(args)
        return _HANDLERS[args.command](args)
    except InadmissiblePError as exc:
        print(f"qode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QodeError as exc:
        print(f"qode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"qode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
