"""Finite-horizon optimal control by direct transcription.

Implicit Euler on a uniform grid, ``u_k`` piecewise constant on
``(t_k, t_{k+1}]``::

    x_{k+1} = x_k + dt * F(x_{k+1}, u_k),      F(x, u) = A_lin x + B_lin u + f(x, u)
    Phi(u)  = dt * sum_k J(x_{k+1}, u_k)

The adjoint is the exact transpose of the linearised stepper, so the
reduced gradient is exact up to round-off. Optimisation runs L-BFGS in the
``L2(0, T; U)`` inner product ``<a, b> = dt * sum_k a_k^T W_U b_k``.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, LinearAlgebraError, StiffStepError
from .ocp_core import Trajectory

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    dt: float = 0.1
    max_outer_iters: int = 500
    grad_tol: float = 1e-6
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    newton_tol: float = 1e-10
    max_newton: int = 50
    memory: int = 10

    def __post_init__(self):
        if self.dt <= 0 or self.grad_tol <= 0 or self.newton_tol <= 0:
            raise ArgumentError("dt and tolerances must be positive")
        if not (0 < self.armijo < 1 and 0 < self.backtrack < 1):
            raise ArgumentError("line-search constants must lie in (0, 1)")
        if self.memory < 1 or self.max_outer_iters < 0:
            raise ArgumentError("memory must be >= 1 and max_outer_iters >= 0")


def make_grid(T, dt):
    """Uniform grid ``0 = t_0 < ... < t_N = T``; ``dt`` must divide ``T``."""
    if T <= 0 or dt <= 0:
        raise ArgumentError("T and dt must be positive")
    N = int(round(T / dt))
    if N < 1 or abs(N * dt - T) > 1e-12 * max(1.0, T):
        raise ArgumentError(f"dt={dt} does not divide T={T}")
    return np.linspace(0.0, T, N + 1)


def _grid_dt(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid must be strictly increasing with at least two points")
    dt = grid[1] - grid[0]
    if np.max(np.abs(np.diff(grid) - dt)) > 1e-9 * max(1.0, grid[-1]):
        raise ArgumentError("grid must be uniform")
    return float(dt)


def _controls(u, N, m):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1 and m == 1:
        u = u[:, None]
    if u.shape == (N + 1, m):
        u = u[:N]
    if u.shape != (N, m):
        raise ArgumentError(f"controls must have shape ({N}, {m}), got {u.shape}")
    return u


class _Factor:
    """LU of a dense or sparse square matrix with ``solve(b, trans)``."""

    def __init__(self, M):
        if sp.issparse(M):
            try:
                self._lu = spla.splu(sp.csc_matrix(M))
            except RuntimeError as exc:
                raise LinearAlgebraError("singular implicit-step matrix") from exc
            self._sparse = True
        else:
            M = np.atleast_2d(np.asarray(M, dtype=float))
            lu, piv = sla.lu_factor(M, check_finite=False)
            d = np.abs(np.diag(lu))
            if d.min() <= 1e-14 * max(d.max(), 1.0):
                raise LinearAlgebraError("singular implicit-step matrix")
            self._lu = (lu, piv)
            self._sparse = False

    def solve(self, b, trans=False):
        if self._sparse:
            return self._lu.solve(b, trans="T" if trans else "N")
        return sla.lu_solve(self._lu, b, trans=1 if trans else 0, check_finite=False)


def _identity_like(A):
    n = A.shape[0]
    return sp.identity(n, format="csc") if sp.issparse(A) else np.eye(n)


def _step_matrix(system, dt, x, u):
    A = system.lin_state_op
    if system.is_linear:
        return _identity_like(A) - dt * A
    J = system.f_x(x, u)
    if sp.issparse(A) or sp.issparse(J):
        return sp.csc_matrix(_identity_like(A) - dt * (A + J))
    return np.eye(A.shape[0]) - dt * (A + J)


def forward_solve(system, u, x0, grid, newton_tol=1e-10, max_newton=50):
    """Implicit-Euler state sequence for a control sequence with one row per interval."""
    dt = _grid_dt(grid)
    N = len(grid) - 1
    n, m = system.n_state, system.n_control
    u = _controls(u, N, m)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (n,):
        raise ArgumentError(f"x0 must have shape ({n},)")
    X = np.empty((N + 1, n))
    X[0] = x0
    BU = np.asarray(system.control_op @ u.T).T  # (N, n)
    A = system.lin_state_op
    if system.is_linear:
        fac = _Factor(_step_matrix(system, dt, None, None))
        for k in range(N):
            X[k + 1] = fac.solve(X[k] + dt * BU[k])
        return X
    for k in range(N):
        X[k + 1] = _newton_step(system, A, dt, X[k], u[k], BU[k], k, newton_tol, max_newton)
    return X


def _newton_step(system, A, dt, xk, uk, buk, k, tol, max_iter):
    def resid(y):
        return y - xk - dt * (np.asarray(A @ y).ravel() + buk + system.f(y, uk))

    y = xk.copy()
    r = resid(y)
    scale = max(1.0, float(np.abs(xk).max()))
    fac = _Factor(_step_matrix(system, dt, y, uk))
    rn = float(np.abs(r).max())
    polished = False
    for _ in range(max_iter):
        if not np.all(np.isfinite(r)):
            break
        if rn <= tol * scale:
            if polished:
                return y
            polished = True  # one extra correction pushes the error well below tol
        y = y - fac.solve(r)
        r_new = resid(y)
        rn_new = float(np.abs(r_new).max())
        if rn_new > 0.5 * rn and rn_new > tol * scale:
            fac = _Factor(_step_matrix(system, dt, y, uk))
        r, rn = r_new, rn_new
    if np.all(np.isfinite(r)) and rn <= tol * scale:
        return y
    raise StiffStepError(f"implicit step {k} did not converge (residual {rn:.3e})", k, rn)


def adjoint_solve(system, cost, x, u, grid):
    """Exact discrete adjoint (Riesz form, same coordinates as the states).

    With ``p = W_X lambda``: ``p_N = 0`` and
    ``(I - dt F_x(x_{k+1}, u_k))^T p_k = p_{k+1} - dt J_x(x_{k+1}, u_k)``.
    """
    dt = _grid_dt(grid)
    N = len(grid) - 1
    n, m = system.n_state, system.n_control
    u = _controls(u, N, m)
    x = np.asarray(x, dtype=float)
    if x.shape != (N + 1, n):
        raise ArgumentError(f"states must have shape ({N + 1}, {n})")
    P = np.zeros((N + 1, n))
    fac = _Factor(_step_matrix(system, dt, None, None)) if system.is_linear else None
    for k in range(N - 1, -1, -1):
        rhs = P[k + 1] - dt * cost.grad_x(x[k + 1], u[k])
        f = fac if fac is not None else _Factor(_step_matrix(system, dt, x[k + 1], u[k]))
        P[k] = f.solve(rhs, trans=True)
    return system.X.solve(P)


def reduced_gradient(system, cost, x, u, lam):
    """Riesz representative (in ``L2(0,T;U)``) of the reduced gradient.

    Row ``k`` is ``W_U^{-1} (J_u(x_{k+1}, u_k) - F_u(x_{k+1}, u_k)^T W_X lambda_k)``;
    the Euclidean derivative ``dPhi/du_k`` is ``dt * W_U`` times it.
    """
    lam = np.asarray(lam, dtype=float)
    N = lam.shape[0] - 1
    m = system.n_control
    u = _controls(u, N, m)
    P = system.X.apply(lam)
    G = np.empty((N, m))
    B = system.control_op
    for k in range(N):
        x1 = x[k + 1]
        Fu = B if system.is_linear else B + system.f_u(x1, u[k])
        G[k] = cost.grad_u(x1, u[k]) - np.asarray(Fu.T @ P[k]).ravel()
    return system.U.solve(G)


def discrete_objective(cost, x, u, dt):
    """``dt * sum_k J(x_{k+1}, u_k)``."""
    return float(dt * sum(cost.value(x[k + 1], u[k]) for k in range(len(u))))


def control_inner(system, dt, a, b):
    return float(dt * np.sum(a * system.U.apply(b)))


class _Evaluator:
    def __init__(self, system, cost, x0, grid, opts):
        self.system, self.cost, self.x0, self.grid, self.opts = system, cost, x0, grid, opts
        self.dt = _grid_dt(grid)
        self.n_evals = 0

    def objective(self, u):
        self.n_evals += 1
        X = forward_solve(self.system, u, self.x0, self.grid, self.opts.newton_tol,
                          self.opts.max_newton)
        return discrete_objective(self.cost, X, u, self.dt), X

    def gradient(self, u, X):
        lam = adjoint_solve(self.system, self.cost, X, u, self.grid)
        return reduced_gradient(self.system, self.cost, X, u, lam), lam


def solve_ocp(system, cost, x0, T, opts=None, steady=None, u_init=None):
    """Solve the transcribed OCP; returns a :class:`Trajectory`.

    Starts from ``u_init``, else the steady control when ``steady`` is given,
    else zero. Hitting ``max_outer_iters`` returns the best iterate with
    ``solver_info["converged"] = False``.
    """
    opts = opts or SolveOptions()
    grid = make_grid(T, opts.dt)
    N, m = len(grid) - 1, system.n_control
    if u_init is not None:
        u = _controls(u_init, N, m).copy()
    elif steady is not None:
        u = np.tile(np.asarray(steady.u_bar, dtype=float), (N, 1))
    else:
        u = np.zeros((N, m))
    ev = _Evaluator(system, cost, np.atleast_1d(np.asarray(x0, dtype=float)), grid, opts)
    dt = ev.dt

    def ip(a, b):
        return control_inner(system, dt, a, b)

    phi, X = ev.objective(u)
    g, lam = ev.gradient(u, X)
    gnorm = np.sqrt(max(ip(g, g), 0.0))
    history = [phi]
    S, Y = deque(maxlen=opts.memory), deque(maxlen=opts.memory)
    it = 0
    status = "converged"
    while gnorm > opts.grad_tol:
        if it >= opts.max_outer_iters:
            status = "max_iterations"
            break
        d = _two_loop(g, S, Y, ip)
        slope = ip(g, d)
        if slope >= 0:
            S.clear(), Y.clear()
            d, slope = -g, -gnorm ** 2
        accepted = _armijo(ev, u, phi, d, slope, opts, ip)
        if accepted is None and len(S):
            S.clear(), Y.clear()
            d, slope = -g, -gnorm ** 2
            accepted = _armijo(ev, u, phi, d, slope, opts, ip)
        if accepted is None:
            status = "line_search_failed"
            break
        alpha, phi_new, X_new, grad = accepted
        u_new = u + alpha * d
        g_new, lam_new = grad if grad is not None else ev.gradient(u_new, X_new)
        s, y = u_new - u, g_new - g
        sy = ip(s, y)
        if sy > 1e-12 * np.sqrt(ip(s, s) * ip(y, y)):
            S.append(s)
            Y.append(y)
        u, phi, X, g, lam = u_new, phi_new, X_new, g_new, lam_new
        gnorm = np.sqrt(max(ip(g, g), 0.0))
        history.append(phi)
        it += 1
        log.debug("ocp it=%d phi=%.12g |g|=%.3e alpha=%.3g", it, phi, gnorm, alpha)

    controls = np.vstack([u, u[-1:]])
    info = {
        "iterations": it,
        "grad_norm": float(gnorm),
        "converged": status == "converged",
        "status": status,
        "objective": float(phi),
        "objective_history": [float(v) for v in history],
        "function_evals": ev.n_evals,
        "dt": dt,
        "adjoint_sign": 1,
    }
    return Trajectory(grid, X, controls, lam, info)


def _two_loop(g, S, Y, ip):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / ip(y, s)
        a = rho * ip(s, q)
        alphas.append((a, rho))
        q = q - a * y
    if S:
        s, y = S[-1], Y[-1]
        q = q * (ip(s, y) / ip(y, y))
    for (s, y), (a, rho) in zip(zip(S, Y), reversed(alphas)):
        b = rho * ip(y, q)
        q = q + (a - b) * s
    return -q


def _armijo(ev, u, phi, d, slope, opts, ip):
    """Backtracking Armijo search.

    Close to the optimum the decrease ``armijo * alpha * slope`` drops below
    the round-off in ``phi``; a trial whose value is within that noise is
    then accepted when its directional derivative satisfies the approximate
    Wolfe conditions. Returns ``(alpha, phi, X, (g, lam) or None)``.
    """
    alpha = 1.0
    noise = 1e-12 * max(abs(phi), 1e-300)
    for _ in range(opts.max_backtracks):
        try:
            phi_new, X_new = ev.objective(u + alpha * d)
        except StiffStepError:
            phi_new, X_new = np.inf, None
        if np.isfinite(phi_new):
            if phi_new <= phi + opts.armijo * alpha * slope:
                return alpha, phi_new, X_new, None
            if phi_new <= phi + noise:
                g_new, lam_new = ev.gradient(u + alpha * d, X_new)
                dd = ip(g_new, d)
                if 0.9 * slope <= dd <= (2 * opts.armijo - 1) * slope:
                    return alpha, phi_new, X_new, (g_new, lam_new)
        alpha *= opts.backtrack
    return None
