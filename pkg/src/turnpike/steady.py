"""Steady-state optimal control problem and its stationarity system.

Unknowns are ``z = (x, u, p)`` with ``p = W_X lambda`` the Euclidean
multiplier. The residual is

    G1 = J_x - F_x^T p,    G2 = J_u - F_u^T p,    G3 = A_lin x + B_lin u + f(x, u),

and it is driven to zero by damped Newton with backtracking on ``|G|``.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, ConvergenceError, LinearAlgebraError
from .linalg import to_dense

log = logging.getLogger(__name__)


@dataclass
class SteadyOptions:
    tol: float = 1e-10
    max_iter: int = 50
    min_step: float = 1e-6
    presolve_steps: int = 200
    warm_start: str = "zeros"  # or "linearized"
    fd_step: float = 1e-7
    trace: bool = False


@dataclass
class SteadyOptimum:
    x_bar: np.ndarray
    u_bar: np.ndarray
    lambda_bar: np.ndarray
    residuals: tuple
    objective: float
    iterations: int = 0
    trace: list = field(default_factory=list)

    def to_dict(self, with_trace=False):
        out = {
            "x_bar": self.x_bar.tolist(),
            "u_bar": self.u_bar.tolist(),
            "lambda_bar": self.lambda_bar.tolist(),
            "residuals": {"adjoint": self.residuals[0], "stationarity": self.residuals[1],
                          "dynamics": self.residuals[2]},
            "objective": self.objective,
            "iterations": self.iterations,
        }
        if with_trace:
            out["trace"] = self.trace
        return out

    @classmethod
    def from_dict(cls, d):
        r = d["residuals"]
        return cls(np.array(d["x_bar"]), np.array(d["u_bar"]), np.array(d["lambda_bar"]),
                   (r["adjoint"], r["stationarity"], r["dynamics"]), d["objective"],
                   d.get("iterations", 0), d.get("trace", []))


class _KKT:
    def __init__(self, system, cost, opts):
        self.sys = system
        self.cost = cost
        self.opts = opts
        self.n, self.m = system.n_state, system.n_control

    def split(self, z):
        n, m = self.n, self.m
        return z[:n], z[n:n + m], z[n + m:]

    def residual(self, z):
        s = self.sys
        x, u, p = self.split(z)
        Fx = s.lin_state_op + s.f_x(x, u)
        Fu = s.control_op + s.f_u(x, u)
        g1 = self.cost.grad_x(x, u) - np.asarray(Fx.T @ p).ravel()
        g2 = self.cost.grad_u(x, u) - np.asarray(Fu.T @ p).ravel()
        g3 = np.asarray(s.rhs(x, u)).ravel()
        return np.concatenate([g1, g2, g3])

    def scaled(self, g):
        """Residuals in Riesz form: (|W_X^-1 G1|_inf, |W_U^-1 G2|_inf, |G3|_inf)."""
        g1, g2, g3 = self.split(g)
        r1 = float(np.abs(self.sys.X.solve(g1)).max(initial=0.0))
        r2 = float(np.abs(self.sys.U.solve(g2)).max(initial=0.0))
        r3 = float(np.abs(g3).max(initial=0.0))
        return r1, r2, r3

    def _second_order(self, x, u, p):
        s, c = self.sys, self.cost
        n, m = self.n, self.m
        if s.is_linear:
            fxx, fxu, fuu = np.zeros((n, n)), np.zeros((n, m)), np.zeros((m, m))
        elif s.second_order is not None:
            fxx, fxu, fuu = s.second_order(x, u, p)
        else:
            fxx, fxu, fuu = self._fd_second_order(x, u, p)
        if c.hessian is not None:
            jxx, jxu, juu = c.hessian(x, u)
        else:
            jxx, jxu, juu = self._fd_cost_hessian(x, u)
        return fxx, fxu, fuu, jxx, jxu, juu

    def _fd_second_order(self, x, u, p):
        # columns of d/dz (F_x^T p, F_u^T p) by central differences
        s, h = self.sys, self.opts.fd_step
        n, m = self.n, self.m

        def first(xx, uu):
            return np.concatenate([np.asarray(s.f_x(xx, uu).T @ p).ravel(),
                                   np.asarray(s.f_u(xx, uu).T @ p).ravel()])

        H = np.zeros((n + m, n + m))
        for j in range(n + m):
            e = np.zeros(n + m)
            e[j] = h * max(1.0, abs(np.concatenate([x, u])[j]))
            H[:, j] = (first(x + e[:n], u + e[n:]) - first(x - e[:n], u - e[n:])) / (2 * e[j])
        H = 0.5 * (H + H.T)
        return H[:n, :n], H[:n, n:], H[n:, n:]

    def _fd_cost_hessian(self, x, u):
        c, h = self.cost, self.opts.fd_step
        n, m = self.n, self.m

        def first(xx, uu):
            return np.concatenate([c.grad_x(xx, uu), c.grad_u(xx, uu)])

        H = np.zeros((n + m, n + m))
        for j in range(n + m):
            e = np.zeros(n + m)
            e[j] = h * max(1.0, abs(np.concatenate([x, u])[j]))
            H[:, j] = (first(x + e[:n], u + e[n:]) - first(x - e[:n], u - e[n:])) / (2 * e[j])
        H = 0.5 * (H + H.T)
        return H[:n, :n], H[:n, n:], H[n:, n:]

    def jacobian(self, z):
        s = self.sys
        x, u, p = self.split(z)
        Fx = s.lin_state_op + s.f_x(x, u)
        Fu = s.control_op + s.f_u(x, u)
        fxx, fxu, fuu, jxx, jxu, juu = self._second_order(x, u, p)
        use_sparse = any(sp.issparse(M) for M in (Fx, Fu, fxx, jxx))
        if use_sparse:
            blocks = [[_as_sp(jxx) - _as_sp(fxx), _as_sp(jxu) - _as_sp(fxu), -_as_sp(Fx).T],
                      [(_as_sp(jxu) - _as_sp(fxu)).T, _as_sp(juu) - _as_sp(fuu), -_as_sp(Fu).T],
                      [_as_sp(Fx), _as_sp(Fu), None]]
            return sp.bmat(blocks, format="csc")
        D = to_dense
        top = np.hstack([D(jxx) - D(fxx), D(jxu) - D(fxu), -D(Fx).T])
        mid = np.hstack([(D(jxu) - D(fxu)).T, D(juu) - D(fuu), -D(Fu).T])
        bot = np.hstack([D(Fx), D(Fu), np.zeros((self.n, self.n))])
        return np.vstack([top, mid, bot])


def _as_sp(M):
    return M if sp.issparse(M) else sp.csr_matrix(np.atleast_2d(M))


def _newton_direction(K, g):
    if sp.issparse(K):
        try:
            lu = spla.splu(sp.csc_matrix(K))
        except RuntimeError as exc:
            raise LinearAlgebraError(
                "singular steady KKT matrix; try a perturbed initial guess") from exc
        d = lu.solve(-g)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is checked below
            lu, piv = sla.lu_factor(K, check_finite=True)
        diag = np.abs(np.diag(lu))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise LinearAlgebraError("singular steady KKT matrix; try a perturbed initial guess")
        d = sla.lu_solve((lu, piv), -g)
    if not np.all(np.isfinite(d)):
        raise LinearAlgebraError("singular steady KKT matrix; try a perturbed initial guess")
    return d


def _gradient_flow(kkt, z, steps):
    """Steepest descent on 1/2 |G|^2; used when Newton stalls far from a root."""
    g = kkt.residual(z)
    phi = 0.5 * g @ g
    tau = 1.0
    for _ in range(steps):
        K = kkt.jacobian(z)
        d = -(K.T @ g)
        if not np.any(d):
            break
        while tau > 1e-14:
            zn = z + tau * d
            gn = kkt.residual(zn)
            if 0.5 * gn @ gn < phi:
                z, g, phi = zn, gn, 0.5 * gn @ gn
                tau *= 2.0
                break
            tau *= 0.5
        else:
            break
    return z


def solve_steady(system, cost, guess=None, opts=None):
    """Solve the steady optimality system; returns a :class:`SteadyOptimum`.

    ``guess`` is ``(x, u, lambda)``; ``None`` uses zeros, or the solution of
    the problem with ``f`` dropped when ``opts.warm_start == "linearized"``.
    """
    opts = opts or SteadyOptions()
    if opts.tol <= 0 or opts.max_iter < 1:
        raise ArgumentError("tolerance and max_iter must be positive")
    n, m = system.n_state, system.n_control
    kkt = _KKT(system, cost, opts)
    if guess is None:
        z = np.zeros(2 * n + m)
        if opts.warm_start == "linearized" and not system.is_linear:
            lin = replace(system, nonlinearity=None, jac_x=None, jac_u=None, second_order=None)
            warm = solve_steady(lin, cost, None, replace(opts, warm_start="zeros"))
            z = np.concatenate([warm.x_bar, warm.u_bar, system.X.apply(warm.lambda_bar)])
    else:
        x0, u0, l0 = guess
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,))
        u0 = np.broadcast_to(np.asarray(u0, dtype=float), (m,))
        l0 = np.broadcast_to(np.asarray(l0, dtype=float), (n,))
        z = np.concatenate([x0, u0, system.X.apply(l0)])

    trace = []
    g = kkt.residual(z)
    res = kkt.scaled(g)
    it = 0
    used_presolve = False
    while max(res) > opts.tol:
        if it >= opts.max_iter:
            raise ConvergenceError(
                f"steady Newton did not converge in {opts.max_iter} iterations", residuals=res)
        it += 1
        d = _newton_direction(kkt.jacobian(z), g)
        merit = np.linalg.norm(g)
        alpha = 1.0
        while True:
            zn = z + alpha * d
            gn = kkt.residual(zn)
            if np.all(np.isfinite(gn)) and np.linalg.norm(gn) < (1 - 1e-4 * alpha) * merit:
                break
            alpha *= 0.5
            if alpha < opts.min_step:
                break
        if alpha < opts.min_step:
            if max(kkt.scaled(gn)) <= opts.tol:
                z, g = zn, gn
            elif not used_presolve:
                log.info("steady Newton stalled; running gradient-flow presolve")
                used_presolve = True
                z = _gradient_flow(kkt, z, opts.presolve_steps)
                g = kkt.residual(z)
            else:
                raise ConvergenceError("steady Newton line search failed", residuals=kkt.scaled(g))
        else:
            z, g = zn, gn
        res = kkt.scaled(g)
        trace.append({"iteration": it, "step": alpha, "residuals": list(res)})
        log.debug("steady it=%d step=%.3g res=%s", it, alpha, res)

    x, u, p = kkt.split(z)
    lam = system.X.solve(p)
    return SteadyOptimum(x.copy(), u.copy(), np.asarray(lam, dtype=float).copy(), tuple(res),
                         float(cost.value(x, u)), it, trace if opts.trace else [])
