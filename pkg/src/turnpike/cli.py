"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 solver non-convergence,
4 assumption violation (e.g. spectrum on the splitting line).
"""

import argparse
import logging
import math
import sys
from pathlib import Path

from .errors import (ArgumentError, ConvergenceError, DecompositionError, LinearAlgebraError,
                     NotApplicableError, TurnpikeError)
from .experiment import ExperimentSpec, compare_runs, default_out_root, run_experiment, _write_csv
from .heat import HeatConfig, write_reference_csv
from .models import MODEL_NAMES

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_ASSUMPTION = 0, 2, 3, 4


def _grid(text):
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 30x10, got {text!r}")
    return nx, ny


def _sign(text):
    if text in ("1", "+1", "+"):
        return 1
    if text in ("-1", "-"):
        return -1
    raise argparse.ArgumentTypeError("adjoint sign must be +1 or -1")


def _experiment_args(p, many):
    p.add_argument("--model", default="lq-tracking", choices=MODEL_NAMES)
    p.add_argument("--config", help="model JSON document (overrides --model)")
    if many:
        p.add_argument("--horizon", type=float, nargs="+", required=True, metavar="T")
    else:
        p.add_argument("--horizon", type=float, required=True, metavar="T")
    p.add_argument("--eps", type=float, nargs="+", default=None,
                   help="epsilon levels, decreasing (default 0.1 0.01 0.001; heat2d 0.1 0.05 0.01)")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--grid", type=_grid, default=None, help="heat2d cells, e.g. 30x10")
    p.add_argument("--out", default=None, help="bundle directory (default $TURNPIKE_OUT/<model>)")
    p.add_argument("--adjoint-sign", type=_sign, default=1,
                   help="+1 (default) or -1 to report the adjoint with the opposite sign")
    p.add_argument("--grad-tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--audit-eps", type=float, default=None)
    p.add_argument("--t-c", type=float, default=1.0, help="control time for the Gramian")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None,
                   help="detect intervals on the deviation relative to the turnpike size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    for flag in ("spectral", "audits", "w-norm", "fits"):
        p.add_argument(f"--no-{flag}", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="turnpike",
                                 description="Long-horizon optimal control and turnpike diagnostics")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    _experiment_args(sub.add_parser("run", help="solve one horizon and write a report bundle"),
                     many=False)
    _experiment_args(sub.add_parser("sweep", help="solve several horizons and compare them"),
                     many=True)
    cp = sub.add_parser("compare", help="tabulate bundles of the same model against T")
    cp.add_argument("paths", nargs="+")
    cp.add_argument("--out", default=None, help="write the table as CSV")
    rp = sub.add_parser("reference-field", help="write the heat2d reference field as CSV")
    rp.add_argument("--grid", type=_grid, default=(30, 10))
    rp.add_argument("--out", default=None)
    return ap


def _spec_from(args):
    eps = args.eps
    if eps is None:
        eps = (0.1, 0.05, 0.01) if args.model == "heat2d" else (0.1, 0.01, 0.001)
    return ExperimentSpec(
        model=args.model, horizons=args.horizon, epsilons=tuple(sorted(eps, reverse=True)),
        dt=args.dt, grid=args.grid, out=args.out, seed=args.seed, grad_tol=args.grad_tol,
        max_outer_iters=args.max_iter, adjoint_sign=args.adjoint_sign,
        spectral=not args.no_spectral, audits=not args.no_audits, w_norm=not args.no_w_norm,
        fits=not args.no_fits, normalize=args.normalize, audit_epsilon=args.audit_eps,
        t_c=args.t_c, model_file=args.config, jobs=args.jobs)


def _fmt(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return "-" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _print_table(rows, cols, out=sys.stdout):
    print("  ".join(f"{c:>12}" for c in cols), file=out)
    for r in rows:
        print("  ".join(f"{_fmt(r[c]):>12}" for c in cols), file=out)


def _experiment(args):
    spec = _spec_from(args)
    res = run_experiment(spec)
    _print_table(res.summary, [c for c in res.summary[0] if c.startswith(("T", "nu", "fit_mu", "rho"))
                               or c == "converged"])
    print(f"bundle written to {res.out}")
    if args.command == "sweep" and len(res.runs) > 1:
        cmp = compare_runs([res.out])
        if cmp["flags"]:
            print("flags: " + ", ".join(cmp["flags"]))
    if not res.converged:
        print("warning: solver did not converge for some horizon", file=sys.stderr)
        return EXIT_SOLVER
    if res.assumption_violation:
        print("warning: " + res.spectral["split"]["reason"], file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _compare(args):
    cmp = compare_runs(args.paths)
    cols = ["T", "nu", "theta", "rho", "measure", "c_expstab", "c_excont", "fit_mu", "converged"]
    _print_table(cmp["rows"], cols)
    for T, diff in cmp["differences"].items():
        print(f"T={T:g}: max |difference| " + ", ".join(f"{k}={v:.3g}" for k, v in diff.items()))
    print("flags: " + (", ".join(cmp["flags"]) if cmp["flags"] else "none"))
    if args.out:
        _write_csv(args.out, cmp["rows"])
    return EXIT_OK


def _reference(args):
    nx, ny = args.grid
    path = Path(args.out) if args.out else default_out_root() / "reference_field.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_reference_csv(HeatConfig(nx=nx, ny=ny), path)
    print(f"reference field written to {path}")
    return EXIT_OK


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _experiment, "sweep": _experiment, "compare": _compare,
                "reference-field": _reference}
    try:
        return handlers[args.command](args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, LinearAlgebraError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DecompositionError, NotApplicableError) as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except TurnpikeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
