"""Experiment runner: horizon sweeps, report bundles and sweep comparison.

A bundle directory holds ``experiment.json``, ``spectrum.csv`` (when the
split exists), ``summary.csv`` and one ``T_<T>`` directory per horizon with
``norms.csv``, ``report.json`` and ``trajectory.bin``.
"""

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .dynamic import SolveOptions, discrete_objective, forward_solve, make_grid, solve_ocp
from .errors import ArgumentError, DecompositionError, NotApplicableError
from .io import as_float, read_json, write_json, write_norms_csv, write_trajectory_bin
from .models import MODEL_NAMES, load_model, model_document, model_from_document
from .ocp_core import kkt_residual, linearize_at, remainder_series, weighted_adjoint
from .spectral import (hautus_detectable, observability_constant, semigroup_bound,
                       spectral_split, write_spectrum_csv)
from .steady import SteadyOptimum, solve_steady

log = logging.getLogger(__name__)

OUT_ENV = "TURNPIKE_OUT"


def default_out_root():
    return Path(os.environ.get(OUT_ENV, "turnpike-out"))


@dataclass
class ExperimentSpec:
    model: str = "lq-tracking"
    horizons: tuple = (20.0,)
    epsilons: tuple = (1e-1, 1e-2, 1e-3)
    dt: float = None
    grid: tuple = None          # (nx, ny), heat2d only
    out: str = None
    seed: int = 0
    grad_tol: float = 1e-8
    max_outer_iters: int = 500
    adjoint_sign: int = 1
    spectral: bool = True
    audits: bool = True
    w_norm: bool = True
    fits: bool = True
    gradient_check: bool = True
    normalize: bool = None      # default: only for heat2d
    audit_epsilon: float = None
    t_c: float = 1.0
    model_file: str = None
    jobs: int = 1

    def __post_init__(self):
        self.horizons = tuple(float(T) for T in np.atleast_1d(self.horizons))
        self.epsilons = tuple(float(e) for e in np.atleast_1d(self.epsilons))
        if not self.horizons or any(T <= 0 for T in self.horizons):
            raise ArgumentError("horizons must be a non-empty list of positive values")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ArgumentError("horizons must be strictly increasing")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ArgumentError("epsilons must be positive")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ArgumentError("epsilons must be strictly decreasing")
        if self.adjoint_sign not in (1, -1):
            raise ArgumentError("adjoint_sign must be +1 or -1")
        if self.model_file is None and self.model not in MODEL_NAMES:
            raise ArgumentError(f"unknown model {self.model!r}; known: {', '.join(MODEL_NAMES)}")
        if self.grid is not None:
            self.grid = tuple(int(g) for g in self.grid)
            if len(self.grid) != 2:
                raise ArgumentError("grid must be (nx, ny)")
            if self.model != "heat2d":
                raise ArgumentError("--grid only applies to heat2d")
        if self.normalize is None:
            self.normalize = self.model == "heat2d"
        if self.jobs < 1 or self.t_c <= 0:
            raise ArgumentError("jobs and t_c must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class RunResult:
    T: float
    trajectory: object
    series: dg.DeviationSeries
    report: dg.TurnpikeReport
    norms: dict
    path: Path = None
    wall_time: float = float("nan")  # solve time in seconds; kept out of the bundle

    @property
    def converged(self):
        return bool(self.trajectory.solver_info.get("converged", False))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    steady: SteadyOptimum
    runs: list
    spectral: dict
    out: Path
    summary: list = field(default_factory=list)

    @property
    def converged(self):
        return all(r.converged for r in self.runs)

    @property
    def assumption_violation(self):
        return bool(self.spectral.get("split", {}).get("available") is False)

    def run(self, T):
        for r in self.runs:
            if abs(r.T - T) < 1e-12:
                return r
        raise KeyError(T)


def build_model(spec):
    if spec.model_file is not None:
        return load_model(spec.model_file)
    over = {}
    if spec.dt is not None:
        over["dt"] = float(spec.dt)
    if spec.grid is not None:
        over["nx"], over["ny"] = spec.grid
    return model_from_document(model_document(spec.model, **over))


def _spectral_context(model, steady, spec):
    """Linearization at the turnpike plus the certificates derived from it."""
    A, B = linearize_at(model.system, steady.x_bar, steady.u_bar)
    Y = model.adjoint_norm
    A_star = weighted_adjoint(model.system, A, Y.W)
    B_star = Y.adjoint_of(B, domain=model.control_norm)
    ctx = {"A_star": A_star, "A": np.asarray(A.toarray() if hasattr(A, "toarray") else A), "B": B}
    info = {}
    try:
        split = spectral_split(A_star, 0.0, B_star)
        ctx["split"] = split
        info["split"] = dict(split.to_dict(), available=True)
    except DecompositionError as exc:
        info["split"] = {"available": False, "reason": str(exc)}
    ok, wit = hautus_detectable(A_star, B_star)
    info["hautus"] = {"detectable": ok, "witnesses": [[w.real, w.imag] for w in wit]}
    bound = semigroup_bound(A_star)
    ctx["bound"] = bound
    info["semigroup"] = bound.to_dict()
    cert = observability_constant(ctx["A"], B, spec.t_c)
    ctx["cert"] = cert
    info["observability"] = {"t_c": cert.t_c, "alpha": cert.alpha,
                             "controllable": cert.controllable}
    return ctx, info


def _audit(fn, *args, **kw):
    try:
        rec = fn(*args, **kw)
    except NotApplicableError as exc:
        return {"available": False, "reason": str(exc)}
    return dict(rec.to_dict(), available=True)


def _gradient_check(model, traj, seed):
    """Central-difference check of the reduced gradient along one random direction.

    The check runs at a randomly perturbed copy of the optimal control, where
    the gradient is not negligible.
    """
    from .dynamic import adjoint_solve, control_inner, reduced_gradient

    rng = np.random.default_rng(seed)
    system, cost, grid, dt = model.system, model.cost, traj.grid, traj.dt
    u0 = traj.controls[:-1]
    scale = max(1.0, float(np.abs(u0).max()))
    u = u0 + 0.1 * scale * rng.standard_normal(u0.shape)
    d = rng.standard_normal(u0.shape)
    X = forward_solve(system, u, model.x0, grid)
    g = reduced_gradient(system, cost, X, u, adjoint_solve(system, cost, X, u, grid))
    exact = control_inner(system, dt, g, d)
    h = 1e-5 * scale

    def phi(v):
        return discrete_objective(cost, forward_solve(system, v, model.x0, grid), v, dt)

    fd = (phi(u + h * d) - phi(u - h * d)) / (2 * h)
    return {"directional_exact": exact, "directional_fd": fd,
            "relative_error": abs(exact - fd) / max(abs(fd), 1e-300), "seed": seed}


def run_horizon(spec, model, steady, ctx, T):
    """Solve one horizon and assemble its report (nothing is written)."""
    opts = SolveOptions(dt=model.dt, grad_tol=spec.grad_tol, max_outer_iters=spec.max_outer_iters)
    make_grid(T, model.dt)
    tic = time.perf_counter()
    traj = solve_ocp(model.system, model.cost, model.x0, T, opts, steady=steady)
    wall = time.perf_counter() - tic
    X, U, Y, H = model.state_norm, model.control_norm, model.adjoint_norm, model.h1_norm
    series = dg.deviation_series(traj, steady, X, U, Y)
    rep = dg.turnpike_report(series, spec.epsilons, spec.normalize, spec.audit_epsilon)
    if not spec.fits:
        rep.fit, rep.fit_error = None, "disabled"
    info = traj.solver_info
    dyn, adj, stat = kkt_residual(model.system, model.cost, traj)
    rep.extras.update({
        "model": model.name, "dt": model.dt, "adjoint_sign": spec.adjoint_sign,
        "solver": {k: info[k] for k in ("iterations", "grad_norm", "converged", "status",
                                        "objective", "function_evals")},
        "kkt_residual": {"dynamics": dyn, "adjoint": adj, "stationarity": stat},
        "steady": _signed_steady(steady, spec.adjoint_sign),
        "norm_labels": {"x_h1": "H1", "u_l2b": "U", "lam_l2": "Y", "lam_h1": "H1"},
    })
    iv = rep.audit_interval()
    if spec.audits:
        rem = remainder_series(model.system, model.cost, traj, steady, Y.W)
        if not iv.empty:
            rep.extras["remainder_sup"] = {
                "r_fx_norm": float(rem.r_fx_norm[iv.i1:iv.i2 + 1].max()),
                "r_Jx": float(Y.norms(rem.r_Jx[iv.i1:iv.i2 + 1]).max())}
        rep.audits["expstab"] = (
            _audit(dg.audit_expstab_bound, ctx["A_star"], rem, series, iv, ctx["bound"], Y)
            if ctx["bound"].valid else {"available": False, "reason": "A* not exponentially stable"})
        rep.audits["excont"] = _audit(dg.audit_excont_bound, ctx["cert"], rem, series, iv, U, Y)
    if spec.w_norm:
        try:
            w, _ = dg.w_norm(traj.adjoints - steady.lambda_bar, ctx["A_star"], traj.grid,
                             (iv.t1, iv.t2), Y, H)
            rep.extras["w_norm"] = {"value": w, "t1": iv.t1, "t2": iv.t2}
        except ArgumentError as exc:
            rep.extras["w_norm"] = {"value": None, "reason": str(exc)}
    if spec.gradient_check:
        rep.extras["gradient_check"] = _gradient_check(model, traj, spec.seed)
    norms = {"t": traj.grid, "x_h1": H.norms(traj.states), "u_l2b": U.norms(traj.controls),
             "lam_l2": Y.norms(traj.adjoints), "lam_h1": H.norms(traj.adjoints)}
    out_traj = traj.flipped() if spec.adjoint_sign == -1 else traj
    return RunResult(T, out_traj, series, rep, norms, wall_time=wall)


def _signed_steady(steady, sign):
    d = steady.to_dict()
    d["lambda_bar"] = [sign * v for v in d["lambda_bar"]]
    return d


def _worker(args):
    spec_d, steady_d, ctx, T = args
    spec = ExperimentSpec.from_dict(spec_d)
    model = build_model(spec)
    return run_horizon(spec, model, SteadyOptimum.from_dict(steady_d), ctx, T)


def _t_dir(T):
    return f"T_{T:g}"


def summary_row(rep):
    row = {"T": rep.T, "converged": rep.extras["solver"]["converged"],
           "iterations": rep.extras["solver"]["iterations"]}
    for k, e in enumerate(rep.epsilons):
        row[f"nu@{e:g}"] = rep.findings["state"][k].length
        row[f"theta@{e:g}"] = rep.findings["adjoint"][k].length
        row[f"measure@{e:g}"] = rep.exceedance["state"][k]
    row["fit_c"] = rep.fit.c if rep.fit else float("nan")
    row["fit_mu"] = rep.fit.mu if rep.fit else float("nan")
    row["rho"] = rep.rho
    for name in ("expstab", "excont"):
        a = rep.audits.get(name, {})
        row[f"c_{name}"] = a.get("constant", float("nan")) if a.get("available") else float("nan")
    w = rep.extras.get("w_norm", {}).get("value")
    row["w_norm"] = float("nan") if w is None else w
    return row


def _write_csv(path, rows):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for k, v in r.items()})


def run_experiment(spec, write=True):
    """Solve every horizon of ``spec`` and (optionally) write the bundle."""
    model = build_model(spec)
    for T in spec.horizons:
        make_grid(T, model.dt)
    steady = solve_steady(model.system, model.cost, opts=model.steady_options)
    ctx, spectral_info = _spectral_context(model, steady, spec) if spec.spectral or spec.audits \
        or spec.w_norm else ({}, {})
    if not spec.spectral:
        spectral_info = {}
    if spec.jobs > 1 and len(spec.horizons) > 1:
        jobs = [(spec.to_dict(), steady.to_dict(), ctx, T) for T in spec.horizons]
        with ProcessPoolExecutor(max_workers=spec.jobs) as ex:
            runs = list(ex.map(_worker, jobs))
    else:
        runs = [run_horizon(spec, model, steady, ctx, T) for T in spec.horizons]
    for r in runs:
        r.report.extras["spectral"] = spectral_info
    out = Path(spec.out) if spec.out else default_out_root() / model.name
    res = ExperimentResult(spec, steady, runs, spectral_info, out,
                           [summary_row(r.report) for r in runs])
    if write:
        write_bundle(res, model)
    return res


def write_bundle(res, model):
    out = res.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "experiment.json", {
        "spec": res.spec.to_dict(), "model": model.name, "document": model.document,
        "steady": _signed_steady(res.steady, res.spec.adjoint_sign),
        "spectral": res.spectral, "converged": res.converged,
        "runs": [_t_dir(r.T) for r in res.runs],
    })
    if "split" in res.spectral and res.spectral["split"].get("available"):
        A_star = weighted_adjoint(model.system,
                                  linearize_at(model.system, res.steady.x_bar, res.steady.u_bar)[0],
                                  model.adjoint_norm.W)
        write_spectrum_csv(spectral_split(A_star, 0.0), out / "spectrum.csv")
    for r in res.runs:
        d = out / _t_dir(r.T)
        d.mkdir(exist_ok=True)
        write_norms_csv(d / "norms.csv", *(r.norms[k] for k in
                                           ("t", "x_h1", "u_l2b", "lam_l2", "lam_h1")))
        write_json(d / "report.json", r.report.to_dict())
        write_trajectory_bin(d / "trajectory.bin", r.trajectory)
        r.path = d
    _write_csv(out / "summary.csv", res.summary)


def _collect_reports(paths):
    reps = []
    for p in map(Path, paths):
        if (p / "report.json").is_file():
            reps.append((p, read_json(p / "report.json")))
        elif (p / "experiment.json").is_file():
            for name in read_json(p / "experiment.json")["runs"]:
                reps.append((p / name, read_json(p / name / "report.json")))
        else:
            raise ArgumentError(f"{p} is neither a bundle nor a run directory")
    return reps


def compare_runs(paths, short_fraction=0.25):
    """Tabulate ``nu, theta, rho`` and audit constants against ``T`` across bundles.

    Runs sharing a horizon are compared field by field (``differences``).
    Flags: ``nu_not_increasing`` when the interval length does not grow
    strictly with ``T``, ``short_intervals`` when no run spends at least
    ``short_fraction`` of its horizon inside the audit-level interval.
    """
    reps = _collect_reports(paths)
    if len(reps) < 2:
        raise ArgumentError("compare needs at least two runs")
    keys = {(r["model"], r["dt"], r["audit_epsilon"], tuple(r["epsilons"])) for _, r in reps}
    if len(keys) != 1:
        raise ArgumentError(f"incompatible bundles: {sorted(map(str, keys))}")
    rows = []
    for path, r in reps:
        k = r["epsilons"].index(r["audit_epsilon"])
        f, fa = r["findings"]["state"][k], r["findings"]["adjoint"][k]

        def const(name):
            a = r["audits"].get(name, {})
            return as_float(a["constant"]) if a.get("available") else float("nan")

        rows.append({
            "T": float(r["T"]), "nu": f["length"], "theta": fa["length"],
            "fraction": f["fraction_of_horizon"], "rho": as_float(r["rho"]),
            "measure": r["exceedance"]["state"][k], "c_expstab": const("expstab"),
            "c_excont": const("excont"),
            "fit_mu": as_float(r["fit"]["mu"]) if r.get("fit") else float("nan"),
            "converged": bool(r["solver"]["converged"]), "path": str(path),
        })
    rows.sort(key=lambda row: (row["T"], row["path"]))
    by_T = {}
    for row in rows:
        by_T.setdefault(row["T"], []).append(row)
    numeric = ("nu", "theta", "fraction", "rho", "measure", "c_expstab", "c_excont", "fit_mu")
    differences = {}
    for T, group in by_T.items():
        if len(group) > 1:
            differences[T] = {k: float(max(_absdiff(a[k], group[0][k]) for a in group[1:]))
                              for k in numeric}
    Ts = sorted(by_T)
    nus = [by_T[T][0]["nu"] for T in Ts]
    flags = []
    if len(Ts) > 1 and any(b <= a for a, b in zip(nus, nus[1:])):
        flags.append("nu_not_increasing")
    if max(row["fraction"] for row in rows) < short_fraction:
        flags.append("short_intervals")
    if not all(row["converged"] for row in rows):
        flags.append("not_converged")
    return {"model": reps[0][1]["model"], "rows": rows, "differences": differences,
            "flags": flags}


def _absdiff(a, b):
    if np.isnan(a) and np.isnan(b):
        return 0.0
    if a == b:  # also covers equal infinities
        return 0.0
    return abs(a - b)
