"""Problem data model and first-order optimality bookkeeping.

A control system is the finite-dimensional realisation of

    x' = A_lin x + B_lin u + f(x, u),

paired with a running cost ``J(x, u)``. Adjoints follow the Lagrangian
convention: the multiplier enters as ``+lambda^T (x' - A_lin x - B_lin u - f)``,
which gives

    lambda' = -(A_lin + f_x)^* lambda + J_x,      lambda(T) = 0,
    0       =  J_u - (B_lin + f_u)^* lambda.

Adjoints are stored as Riesz representatives in the state inner product,
i.e. in the same coordinates as the states.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError
from .linalg import InnerProduct, to_dense, weighted_op_norm


def _vec(v, n, what):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise ArgumentError(f"{what} must have shape ({n},), got {v.shape}")
    return v


@dataclass(frozen=True)
class ControlSystem:
    """Semilinear control system ``x' = A_lin x + B_lin u + f(x, u)``.

    ``nonlinearity=None`` means ``f == 0``; the Jacobians are then zero and
    the implicit stepper reuses one factorization per solve.

    ``second_order`` optionally returns the contracted second derivatives
    ``(sum_i l_i f_i,xx, sum_i l_i f_i,xu, sum_i l_i f_i,uu)`` for a dual
    vector ``l``; the steady Newton solver falls back to finite differences
    of ``jac_x``/``jac_u`` when it is missing.
    """

    n_state: int
    n_control: int
    lin_state_op: object
    control_op: object
    nonlinearity: Optional[Callable] = None
    jac_x: Optional[Callable] = None
    jac_u: Optional[Callable] = None
    state_inner: object = None
    control_inner: object = None
    h1_inner: object = None
    second_order: Optional[Callable] = None
    name: str = "system"

    def __post_init__(self):
        n, m = self.n_state, self.n_control
        if n < 1 or m < 1:
            raise ArgumentError("state and control dimensions must be positive")
        A = self.lin_state_op
        if not sp.issparse(A):
            A = np.atleast_2d(np.asarray(A, dtype=float))
        B = self.control_op
        if not sp.issparse(B):
            B = np.asarray(B, dtype=float).reshape(n, m)
        if A.shape != (n, n):
            raise ArgumentError(f"lin_state_op must be {n}x{n}, got {A.shape}")
        if B.shape != (n, m):
            raise ArgumentError(f"control_op must be {n}x{m}, got {B.shape}")
        object.__setattr__(self, "lin_state_op", A)
        object.__setattr__(self, "control_op", B)
        if self.nonlinearity is not None and (self.jac_x is None or self.jac_u is None):
            raise ArgumentError("a nonlinearity requires jac_x and jac_u")
        sx = self.state_inner if self.state_inner is not None else np.eye(n)
        su = self.control_inner if self.control_inner is not None else np.eye(m)
        object.__setattr__(self, "state_inner", sx)
        object.__setattr__(self, "control_inner", su)
        self.X.check()
        self.U.check()
        if self.X.dim != n or self.U.dim != m:
            raise ArgumentError("inner-product weights do not match dimensions")
        if self.h1_inner is not None:
            self.H1.check()

    @property
    def is_linear(self):
        return self.nonlinearity is None

    @cached_property
    def X(self):
        return InnerProduct(self.state_inner)

    @cached_property
    def U(self):
        return InnerProduct(self.control_inner)

    @cached_property
    def H1(self):
        return InnerProduct(self.h1_inner) if self.h1_inner is not None else None

    def f(self, x, u):
        if self.nonlinearity is None:
            return np.zeros(self.n_state)
        return np.asarray(self.nonlinearity(x, u), dtype=float)

    def f_x(self, x, u):
        if self.nonlinearity is None:
            return np.zeros((self.n_state, self.n_state))
        return self.jac_x(x, u)

    def f_u(self, x, u):
        if self.nonlinearity is None:
            return np.zeros((self.n_state, self.n_control))
        return self.jac_u(x, u)

    def rhs(self, x, u):
        return self.lin_state_op @ x + self.control_op @ u + self.f(x, u)


@dataclass(frozen=True)
class QuadraticCost:
    """``J = 1/2 |x - x_d|_Q^2 + 1/2 |u - u_d|_R^2``."""

    Q: object
    x_d: np.ndarray
    R: object
    u_d: np.ndarray


class CostFunctional:
    """Running cost with gradients; use :meth:`quadratic` for tracking costs."""

    def __init__(self, value, grad_x, grad_u, hessian=None, quadratic=None):
        self.value = value
        self.grad_x = grad_x
        self.grad_u = grad_u
        self.hessian = hessian
        self.quadratic_form = quadratic

    @classmethod
    def quadratic(cls, Q, x_d, R, u_d):
        Q = Q if sp.issparse(Q) else np.atleast_2d(np.asarray(Q, dtype=float))
        R = R if sp.issparse(R) else np.atleast_2d(np.asarray(R, dtype=float))
        x_d = np.atleast_1d(np.asarray(x_d, dtype=float))
        u_d = np.atleast_1d(np.asarray(u_d, dtype=float))
        form = QuadraticCost(Q, x_d, R, u_d)

        def value(x, u):
            dx, du = x - x_d, u - u_d
            return 0.5 * float(dx @ (Q @ dx)) + 0.5 * float(du @ (R @ du))

        def grad_x(x, u):
            return np.asarray(Q @ (x - x_d)).ravel()

        def grad_u(x, u):
            return np.asarray(R @ (u - u_d)).ravel()

        def hessian(x, u):
            return Q, np.zeros((x_d.size, u_d.size)), R

        return cls(value, grad_x, grad_u, hessian=hessian, quadratic=form)

    def values(self, X, U):
        return np.array([self.value(x, u) for x, u in zip(X, U)])


@dataclass
class Trajectory:
    """Discrete solution on a uniform grid.

    ``controls[k]`` acts on ``(t_k, t_{k+1}]``; the last row repeats
    ``controls[N-1]`` so that every array has ``N + 1`` rows.
    """

    grid: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    adjoints: np.ndarray
    solver_info: dict = field(default_factory=dict)

    @property
    def T(self):
        return float(self.grid[-1])

    @property
    def dt(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def n_steps(self):
        return len(self.grid) - 1

    def flipped(self):
        """Copy with the adjoint sign flipped (for the opposite convention)."""
        return Trajectory(self.grid, self.states, self.controls, -self.adjoints,
                          dict(self.solver_info, adjoint_sign=-self.solver_info.get("adjoint_sign", 1)))


@dataclass
class RemainderSeries:
    grid: np.ndarray
    r_f: np.ndarray
    r_fx_norm: np.ndarray
    r_fu_norm: np.ndarray
    r_Jx: np.ndarray
    r_Ju: np.ndarray
    # r_fx(t)^* dlam(t) and r_fu(t)^* dlam(t), needed by the controllability audit
    r_fx_adj_dlam: np.ndarray = None
    r_fu_adj_dlam: np.ndarray = None


def eval_rhs(system, x, u):
    """Evaluate ``A_lin x + B_lin u + f(x, u)``."""
    x = _vec(x, system.n_state, "x")
    u = _vec(u, system.n_control, "u")
    return np.asarray(system.rhs(x, u)).ravel()


def linearize_at(system, x_bar, u_bar):
    """Return ``(A, B) = (A_lin + f_x(x_bar, u_bar), B_lin + f_u(x_bar, u_bar))``."""
    x_bar = _vec(x_bar, system.n_state, "x_bar")
    u_bar = _vec(u_bar, system.n_control, "u_bar")
    A = system.lin_state_op + system.f_x(x_bar, u_bar)
    B = system.control_op + system.f_u(x_bar, u_bar)
    if sp.issparse(B):
        B = B.toarray()
    return A, np.asarray(B)


def remainder_series(system, cost, traj, steady, y_inner=None):
    """Remainder terms along ``traj`` relative to the steady optimum.

    ``r_fx_norm``/``r_fu_norm`` are operator norms ``L(X, Y)`` / ``L(U, Y)``
    with ``X`` the state inner product and ``Y`` defaulting to it as well.
    """
    Y = system.X if y_inner is None else (y_inner if isinstance(y_inner, InnerProduct) else InnerProduct(y_inner))
    xb, ub, lb = steady.x_bar, steady.u_bar, steady.lambda_bar
    f_bar = system.f(xb, ub)
    fx_bar = system.f_x(xb, ub)
    fu_bar = system.f_u(xb, ub)
    jx_bar = cost.grad_x(xb, ub)
    ju_bar = cost.grad_u(xb, ub)
    K = len(traj.grid)
    n, m = system.n_state, system.n_control
    r_f = np.zeros((K, n))
    r_jx = np.zeros((K, n))
    r_ju = np.zeros((K, m))
    r_fx_norm = np.zeros(K)
    r_fu_norm = np.zeros(K)
    r_fx_dl = np.zeros((K, n))
    r_fu_dl = np.zeros((K, m))
    for k in range(K):
        x, u = traj.states[k], traj.controls[k]
        dlam = traj.adjoints[k] - lb
        r_jx[k] = cost.grad_x(x, u) - jx_bar
        r_ju[k] = cost.grad_u(x, u) - ju_bar
        if system.is_linear:
            continue
        r_f[k] = system.f(x, u) - f_bar
        d_fx = system.f_x(x, u) - fx_bar
        d_fu = system.f_u(x, u) - fu_bar
        r_fx_norm[k] = weighted_op_norm(d_fx, system.X, Y)
        r_fu_norm[k] = weighted_op_norm(d_fu, system.U, Y)
        # Y-adjoints: r^* v = W_dom^{-1} r^T W_Y v
        wdl = Y.apply(dlam)
        r_fx_dl[k] = system.X.solve(np.asarray(d_fx.T @ wdl).ravel())
        r_fu_dl[k] = system.U.solve(np.asarray(d_fu.T @ wdl).ravel())
    return RemainderSeries(np.asarray(traj.grid), r_f, r_fx_norm, r_fu_norm, r_jx, r_ju,
                           r_fx_dl, r_fu_dl)


def kkt_residual(system, cost, traj):
    """Max-over-grid residuals of the discrete optimality system.

    Returns ``(dyn_res, adj_res, stat_res)`` for the implicit-Euler
    transcription used by :mod:`turnpike.dynamic`:

    * dynamics: ``|(x_{k+1} - x_k)/dt - F(x_{k+1}, u_k)|_inf``,
    * adjoint: ``|(p_{k+1} - p_k)/dt + F_x^T p_k - J_x(x_{k+1}, u_k)|_inf``
      with ``p = W_X lambda``, plus ``|lambda_N|_inf`` (terminal condition),
    * stationarity: ``|W_U^{-1}(J_u - F_u^T p_k)|_U`` at each interval.
    """
    dt = traj.dt
    N = traj.n_steps
    X, L, Uc = traj.states, traj.adjoints, traj.controls
    P = system.X.apply(L)
    dyn = adj = stat = 0.0
    for k in range(N):
        x1, u = X[k + 1], Uc[k]
        r = (x1 - X[k]) / dt - np.asarray(system.rhs(x1, u)).ravel()
        dyn = max(dyn, float(np.abs(r).max()))
        Fx = system.lin_state_op + system.f_x(x1, u)
        Fu = system.control_op + system.f_u(x1, u)
        ra = (P[k + 1] - P[k]) / dt + np.asarray(Fx.T @ P[k]).ravel() - cost.grad_x(x1, u)
        adj = max(adj, float(np.abs(ra).max()))
        g = system.U.solve(cost.grad_u(x1, u) - np.asarray(Fu.T @ P[k]).ravel())
        stat = max(stat, system.U.norm(g))
    adj = max(adj, float(np.abs(L[N]).max()))
    return dyn, adj, stat


def weighted_adjoint(system, A, y_inner=None):
    """Adjoint of ``A`` in the state (or supplied ``Y``) inner product, dense."""
    Y = system.X if y_inner is None else InnerProduct(y_inner)
    return Y.adjoint_of(to_dense(A) if not sp.issparse(A) else A)
