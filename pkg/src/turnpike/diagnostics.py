"""Turnpike detection and bound audits on discrete trajectories.

Interval detection works on closed grid intervals; audits report the
smallest constant that makes an inequality hold on the grid, since the
constants in the underlying estimates are only known to exist.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import least_squares

from .errors import ArgumentError, FitUnavailableError, NotApplicableError
from .linalg import InnerProduct
from .spectral import semigroup_bound


@dataclass
class DeviationSeries:
    grid: np.ndarray
    d: np.ndarray        # |x - x_bar|_X + |u - u_bar|_U
    d_adj: np.ndarray    # |lambda - lambda_bar|_Y
    labels: dict = field(default_factory=dict)
    scale: float = 1.0
    scale_adj: float = 1.0

    def normalized(self):
        """Deviations relative to the turnpike size (``|x_bar| + |u_bar|`` and ``|lambda_bar|``)."""
        s = self.scale if self.scale > 0 else 1.0
        sa = self.scale_adj if self.scale_adj > 0 else 1.0
        return DeviationSeries(self.grid, self.d / s, self.d_adj / sa,
                               dict(self.labels, normalized=True), 1.0, 1.0)


@dataclass
class IntervalFinding:
    epsilon: float
    t1: float
    t2: float
    length: float
    fraction_of_horizon: float
    i1: int = 0
    i2: int = 0

    @property
    def empty(self):
        return self.length <= 0

    def to_dict(self):
        return asdict(self)


@dataclass
class ExpFit:
    c: float
    mu: float
    residual: float
    decaying: bool = True
    n_points: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class AuditRecord:
    name: str
    constant: float
    s1: float
    s2: float
    details: dict = field(default_factory=dict)

    @property
    def finite(self):
        return bool(np.isfinite(self.constant))

    def to_dict(self):
        out = {"name": self.name, "constant": self.constant, "finite": self.finite,
               "s1": self.s1, "s2": self.s2}
        out.update({k: v for k, v in self.details.items() if np.isscalar(v)})
        return out


@dataclass
class AdjointBoundReport:
    horizons: list
    rho: list
    growth: float
    bounded: bool
    tolerance: float = 0.10

    def to_dict(self):
        return asdict(self)


def _ip(w, n):
    if w is None:
        return InnerProduct.identity(n)
    return w if isinstance(w, InnerProduct) else InnerProduct(w)


def deviation_series(traj, steady, state_norm=None, control_norm=None, adjoint_norm=None):
    """``d = |x - x_bar|_X + |u - u_bar|_U`` and ``d_adj = |lambda - lambda_bar|_Y``."""
    n, m = traj.states.shape[1], traj.controls.shape[1]
    X, U, Y = _ip(state_norm, n), _ip(control_norm, m), _ip(adjoint_norm, n)
    if steady.x_bar.shape != (n,) or steady.u_bar.shape != (m,):
        raise ArgumentError("trajectory and steady optimum have different dimensions")
    d = X.norms(traj.states - steady.x_bar) + U.norms(traj.controls - steady.u_bar)
    d_adj = Y.norms(traj.adjoints - steady.lambda_bar)
    scale = X.norm(steady.x_bar) + U.norm(steady.u_bar)
    return DeviationSeries(np.asarray(traj.grid, dtype=float), d, d_adj,
                           {"state": "X", "control": "U", "adjoint": "Y"},
                           scale, Y.norm(steady.lambda_bar))


def _curve(series, which):
    if isinstance(series, DeviationSeries):
        return series.grid, (series.d if which == "state" else series.d_adj)
    grid, values = series
    return np.asarray(grid, dtype=float), np.asarray(values, dtype=float)


def largest_interval(series, epsilon, which="state"):
    """Longest closed grid interval on which the deviation stays ``<= epsilon``.

    ``which`` selects ``d`` ("state") or ``d_adj`` ("adjoint"); a plain
    ``(grid, values)`` pair is accepted too. Ties go to the earliest start.
    """
    if not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    grid, v = _curve(series, which)
    T = grid[-1] - grid[0]
    ok = v <= epsilon
    best = None
    k, K = 0, len(v)
    while k < K:
        if not ok[k]:
            k += 1
            continue
        j = k
        while j + 1 < K and ok[j + 1]:
            j += 1
        if best is None or grid[j] - grid[k] > grid[best[1]] - grid[best[0]]:
            best = (k, j)
        k = j + 1
    if best is None:
        return IntervalFinding(float(epsilon), float(grid[0]), float(grid[0]), 0.0, 0.0, 0, 0)
    i1, i2 = best
    length = float(grid[i2] - grid[i1])
    return IntervalFinding(float(epsilon), float(grid[i1]), float(grid[i2]), length,
                           length / T if T > 0 else 0.0, i1, i2)


def exceedance_measure(series, epsilon, which="state"):
    """Measure of ``{t : d(t) > epsilon}``, each cell weighted by the share of
    its two endpoints that exceed."""
    if not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    grid, v = _curve(series, which)
    over = (v > epsilon).astype(float)
    return float(np.sum(np.diff(grid) * 0.5 * (over[:-1] + over[1:])))


def fit_exponential(series, T=None, floor=1e-14, which="state"):
    """Fit ``d(t) ~ c (exp(-mu t) + exp(-mu (T - t)))`` by least squares on ``log d``.

    Only points with ``d > floor`` enter the fit.
    """
    grid, v = _curve(series, which)
    T = float(grid[-1]) if T is None else float(T)
    keep = v > floor
    if keep.sum() < 10:
        raise FitUnavailableError(f"only {int(keep.sum())} points above {floor:g}")
    t, y = grid[keep], np.log(v[keep])

    def slope(lo, hi):
        sel = (t >= lo) & (t <= hi)
        if sel.sum() < 2:
            return None
        return np.polyfit(t[sel], y[sel], 1)

    first = slope(0.0, T / 4)
    last = slope(3 * T / 4, T)
    mus = [abs(p[0]) for p in (first, last) if p is not None]
    mu0 = max(np.mean(mus) if mus else 1.0 / T, 1e-3 / T)
    c0 = np.exp(first[1]) if first is not None else np.exp(y.max())

    def resid(p):
        c, mu = np.exp(p[0]), np.exp(p[1])
        return y - np.log(c * (np.exp(-mu * t) + np.exp(-mu * (T - t))))

    sol = least_squares(resid, [np.log(c0), np.log(mu0)], method="lm", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=2000)
    c, mu = float(np.exp(sol.x[0])), float(np.exp(sol.x[1]))
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return ExpFit(c, mu, rms, bool(mu * T > 1.0), int(keep.sum()))


def _interval_indices(grid, interval):
    if isinstance(interval, IntervalFinding):
        t1, t2 = interval.t1, interval.t2
    else:
        t1, t2 = interval
    tol = 1e-9 * max(1.0, grid[-1])
    idx = np.nonzero((grid >= t1 - tol) & (grid <= t2 + tol))[0]
    if idx.size < 2 or t2 - t1 <= 0:
        raise NotApplicableError("audit needs a non-empty interval")
    return idx[0], idx[-1], float(t1), float(t2)


def _ratio_max(num, den, skip):
    num = np.where(skip | (num <= 0.0), 0.0, num)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0.0, 0.0, np.where(den > 0, num / den, np.inf))
    return float(np.max(r, initial=0.0))


def audit_expstab_bound(A_star, remainder, series, interval, bound=None, y_inner=None,
                        sigma=None, c=None, resolution=1e-8):
    """Exponential-stability bound on ``|dlam(t)|`` over ``[t1, t2]``.

    ``RHS(t) = M exp(-mu (t2 - t)) |dlam(t2)| + c * (sup_[t,t2] |r_fx| rho
    + sup_[t,t2] |r_Jx|_Y + sup_[t,t2] |sigma|_Y)`` with ``rho`` the max of
    ``|dlam|`` on the interval. Returns the smallest ``c`` (or evaluates the
    bound with a given ``c``). ``sigma`` is an optional extra forcing term,
    given as a norm series or as ``(K, n)`` vectors. Points with
    ``|dlam| <= resolution * max |dlam|`` are below what the discrete
    solution resolves and do not constrain ``c``.
    """
    bound = bound if bound is not None else semigroup_bound(A_star)
    if not bound.valid:
        raise NotApplicableError("A* is not exponentially stable")
    grid = series.grid
    i1, i2, t1, t2 = _interval_indices(grid, interval)
    Y = _ip(y_inner, remainder.r_Jx.shape[1])
    sl = slice(i1, i2 + 1)
    dl = series.d_adj[sl]
    rho = float(dl.max())
    t = grid[sl]

    def sup_to_end(a):
        return np.maximum.accumulate(a[::-1])[::-1]

    forcing = sup_to_end(remainder.r_fx_norm[sl]) * rho + sup_to_end(Y.norms(remainder.r_Jx[sl]))
    if sigma is not None:
        sig = np.asarray(sigma, dtype=float)
        sig = Y.norms(sig) if sig.ndim == 2 else sig
        forcing = forcing + sup_to_end(sig[sl])
    head = bound.M * np.exp(-bound.mu * (t2 - t)) * series.d_adj[i2]
    skip = dl <= resolution * float(np.max(series.d_adj))
    if c is None:
        c = _ratio_max(dl - head, forcing, skip)
    rhs = head + (c * forcing if np.isfinite(c) else np.where(forcing > 0, np.inf, 0.0))
    return AuditRecord("expstab", float(c), t1, (t2 - t1) / 2.0, {
        "M": bound.M, "mu": bound.mu, "rho": rho, "t1": t1, "t2": t2,
        "bound_sup": float(np.max(rhs)), "rhs": rhs, "lhs": dl,
    })


def audit_excont_bound(cert, remainder, series, interval, u_inner=None, y_inner=None,
                       sigma=None, rho_T=None, c=None, resolution=1e-8):
    """Exact-controllability bound ``|dlam(t)|^2 <= c * I(t)`` on ``[t1 + t_c, t2]``.

    ``I(t)`` integrates ``|r_fu^* dlam + r_Ju + sigma|_U^2 + |-r_fx^* dlam +
    r_Jx + rho_T|_Y^2`` over ``[t - t_c, t]`` with the trapezoid rule.
    ``resolution`` has the same meaning as in :func:`audit_expstab_bound`.
    """
    if not cert.alpha > 1e-12:
        raise NotApplicableError("(A, B) is not controllable in time t_c (alpha == 0)")
    grid = series.grid
    i1, i2, t1, t2 = _interval_indices(grid, interval)
    if t2 - t1 < cert.t_c - 1e-12:
        raise NotApplicableError("interval shorter than t_c")
    n, m = remainder.r_Jx.shape[1], remainder.r_Ju.shape[1]
    U, Y = _ip(u_inner, m), _ip(y_inner, n)
    fu_dl = remainder.r_fu_adj_dlam if remainder.r_fu_adj_dlam is not None else 0.0
    fx_dl = remainder.r_fx_adj_dlam if remainder.r_fx_adj_dlam is not None else 0.0
    a = fu_dl + remainder.r_Ju
    b = -fx_dl + remainder.r_Jx
    if sigma is not None:
        a = a + sigma
    if rho_T is not None:
        b = b + rho_T
    integrand = U.norms(a) ** 2 + Y.norms(b) ** 2
    dt = grid[1] - grid[0]
    nc = int(round(cert.t_c / dt))
    if nc < 1:
        raise NotApplicableError("t_c is shorter than one time step")
    cells = 0.5 * dt * (integrand[1:] + integrand[:-1])
    ks = np.arange(max(i1 + nc, nc), i2 + 1)
    if ks.size == 0:
        raise NotApplicableError("no grid point in [t1 + t_c, t2]")
    # windowed sums, not cumsum differences: the integrand spans many decades
    I = sliding_window_view(cells, nc).sum(axis=1)[ks - nc]
    lhs = series.d_adj[ks] ** 2
    skip = series.d_adj[ks] <= resolution * float(np.max(series.d_adj))
    if c is None:
        c = _ratio_max(lhs, I, skip)
    return AuditRecord("excont", float(c), float(grid[ks[0]]), t2, {
        "alpha": cert.alpha, "t_c": cert.t_c, "t1": t1, "t2": t2,
        "integral_max": float(I.max()), "lhs": lhs, "integral": I,
    })


def w_norm(lam, A_star, grid, interval, y_inner=None, h1_inner=None):
    """``W^{A*}`` norm of ``lam`` over a sub-interval plus pointwise norms.

    ``w^2 = int |lam'|^2 + |lam|^2 + |A* lam|^2 dt`` (trapezoid rule, central
    differences). The pointwise values use ``h1_inner`` when supplied as a
    surrogate for the interpolation-space norm, else ``y_inner``.
    """
    lam = np.asarray(lam, dtype=float)
    grid = np.asarray(grid, dtype=float)
    t1, t2 = (interval.t1, interval.t2) if isinstance(interval, IntervalFinding) else interval
    tol = 1e-9 * max(1.0, abs(grid[-1]))
    idx = np.nonzero((grid >= t1 - tol) & (grid <= t2 + tol))[0]
    if idx.size < 3:
        raise ArgumentError("w_norm needs at least three grid points")
    L = lam[idx[0]:idx[-1] + 1]
    t = grid[idx[0]:idx[-1] + 1]
    Y = _ip(y_inner, L.shape[1])
    dL = np.gradient(L, t, axis=0, edge_order=2)
    AL = np.asarray(A_star @ L.T).T
    dens = Y.norms(dL) ** 2 + Y.norms(L) ** 2 + Y.norms(AL) ** 2
    w2 = float(np.trapezoid(dens, t))
    P = _ip(h1_inner, L.shape[1]) if h1_inner is not None else Y
    return float(np.sqrt(w2)), P.norms(L)


def audit_adjoint_bound(series_by_T, interval_by_T, tolerance=0.10):
    """``rho(T) = max |dlam|`` over each horizon's interval, and its growth over the sweep."""
    Ts = sorted(series_by_T)
    if len(Ts) < 2:
        raise ArgumentError("need at least two horizons")
    rho = []
    for T in Ts:
        s = series_by_T[T]
        iv = interval_by_T[T] if not callable(interval_by_T) else interval_by_T(s)
        i1, i2, _, _ = _interval_indices(s.grid, iv)
        rho.append(float(np.max(s.d_adj[i1:i2 + 1])))
    base = rho[0]
    if base > 0:
        growth = max(r / base for r in rho[1:]) - 1.0
    else:
        growth = 0.0 if max(rho) == 0 else np.inf
    return AdjointBoundReport([float(T) for T in Ts], rho, float(growth), bool(growth < tolerance),
                              tolerance)


@dataclass
class TurnpikeReport:
    """Detection results for one horizon.

    ``findings``/``exceedance`` map ``"state"``/``"adjoint"`` to one entry per
    epsilon. ``rho`` is the max of ``|dlam|_Y`` (unnormalized) over the state
    interval at ``audit_epsilon``; audits and extras are filled in by callers.
    """

    T: float
    epsilons: list
    normalized: bool
    findings: dict
    exceedance: dict
    fit: ExpFit = None
    fit_error: str = None
    audit_epsilon: float = None
    rho: float = float("nan")
    audits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def audit_interval(self):
        k = self.epsilons.index(self.audit_epsilon)
        return self.findings["state"][k]

    def to_dict(self):
        return {
            "T": self.T, "epsilons": list(self.epsilons), "normalized": self.normalized,
            "findings": {k: [f.to_dict() for f in v] for k, v in self.findings.items()},
            "exceedance": {k: list(v) for k, v in self.exceedance.items()},
            "fit": self.fit.to_dict() if self.fit is not None else None,
            "fit_error": self.fit_error,
            "audit_epsilon": self.audit_epsilon, "rho": self.rho,
            "audits": self.audits, **self.extras,
        }


def turnpike_report(series, epsilons, normalize=False, audit_epsilon=None, fit_floor=None):
    """Intervals, exceedance measures, exponential fit and ``rho`` for one run.

    Detection runs on ``series.normalized()`` when ``normalize`` is set.
    ``audit_epsilon`` defaults to the median epsilon level; ``fit_floor``
    defaults to ``1e-8 * max d`` (the resolution of the discrete solution).
    """
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps):
        raise ArgumentError("epsilons must be positive")
    det = series.normalized() if normalize else series
    T = float(series.grid[-1])
    findings = {w: [largest_interval(det, e, w) for e in eps] for w in ("state", "adjoint")}
    exceed = {w: [exceedance_measure(det, e, w) for e in eps] for w in ("state", "adjoint")}
    audit_eps = eps[len(eps) // 2] if audit_epsilon is None else float(audit_epsilon)
    if audit_eps not in eps:
        raise ArgumentError("audit_epsilon must be one of the epsilons")
    rep = TurnpikeReport(T, eps, bool(normalize), findings, exceed, audit_epsilon=audit_eps)
    floor = fit_floor if fit_floor is not None else max(1e-14, 1e-8 * float(np.max(det.d)))
    try:
        rep.fit = fit_exponential(det, T, floor=floor)
    except FitUnavailableError as exc:
        rep.fit_error = str(exc)
    iv = rep.audit_interval()
    if not iv.empty:
        rep.rho = float(np.max(series.d_adj[iv.i1:iv.i2 + 1]))
    return rep
