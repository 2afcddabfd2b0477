"""Independent reference solutions used by the tests.

None of these import the package's solvers.
"""

import numpy as np
import scipy.linalg as sla


def scalar_lq_extremal(a, b, q, r, x_d, x0, T, t):
    """Continuous-time optimal (x, u, lam) of the scalar tracking problem.

    x' = a x + b u,  J = 1/2 q (x - x_d)^2 + 1/2 r u^2,  x(0) = x0.
    With lam' = -a lam + q (x - x_d), lam(T) = 0 and u = b lam / r the pair
    z = (x, lam) solves z' = H z + c, H = [[a, b^2/r], [q, -a]],
    c = (0, -q x_d). Written in the stable/unstable eigenbasis of H
    (eigenvalues -w, +w with w = sqrt(a^2 + b^2 q / r)) so that long
    horizons stay well conditioned:

        z(t) = z_bar + alpha v_s exp(-w t) + beta v_u exp(w (t - T)).
    """
    H = np.array([[a, b * b / r], [q, -a]], dtype=float)
    c = np.array([0.0, -q * x_d])
    z_bar = np.linalg.solve(H, -c)
    w = np.sqrt(a * a + b * b * q / r)
    vs = np.array([b * b / r, -w - a])   # (H + w I) vs = 0
    vu = np.array([b * b / r, w - a])    # (H - w I) vu = 0
    eT = np.exp(-w * T)
    M = np.array([[vs[0], vu[0] * eT], [vs[1] * eT, vu[1]]])
    rhs = np.array([x0 - z_bar[0], -z_bar[1]])
    alpha, beta = np.linalg.solve(M, rhs)
    t = np.asarray(t, dtype=float)
    es, eu = np.exp(-w * t), np.exp(w * (t - T))
    x = z_bar[0] + alpha * vs[0] * es + beta * vu[0] * eu
    lam = z_bar[1] + alpha * vs[1] * es + beta * vu[1] * eu
    return x, b * lam / r, lam


def lq_steady(a, b, q, r, x_d):
    """Steady optimum from the 3x3 linear KKT system (x, u, lam)."""
    K = np.array([[a, b, 0.0],      # a x + b u = 0
                  [q, 0.0, -a],     # q (x - x_d) - a lam = 0
                  [0.0, r, -b]])    # r u - b lam = 0
    return np.linalg.solve(K, [0.0, q * x_d, 0.0])


def hamiltonian_rate(a, b, q, r):
    return float(np.sqrt(a * a + b * b * q / r))


def central_directional(phi, u, d, h):
    """(phi(u + h d) - phi(u - h d)) / (2 h)."""
    return (phi(u + h * d) - phi(u - h * d)) / (2.0 * h)


def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian with the step scaled by the argument norm."""
    x = np.asarray(x, dtype=float)
    step = h * max(1.0, np.linalg.norm(x))
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        J[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step)
    return J


def planted_matrix(rng, unstable, stable):
    """Real matrix V diag(...) V^-1 with the given eigenvalues (complex ones in
    conjugate pairs, realised as 2x2 rotation blocks) and a random
    well-conditioned V."""
    blocks = []
    for ev in list(unstable) + list(stable):
        ev = complex(ev)
        if ev.imag == 0:
            blocks.append(np.array([[ev.real]]))
        elif ev.imag > 0:
            blocks.append(np.array([[ev.real, ev.imag], [-ev.imag, ev.real]]))
    D = sla.block_diag(*blocks)
    n = D.shape[0]
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V = Q @ np.diag(rng.uniform(0.5, 2.0, n))
    return V @ D @ np.linalg.inv(V)


def analytic_gramian_zero_A(B, t_c):
    """Gramian of (0, B) over [0, t_c] is t_c B B^T."""
    B = np.atleast_2d(B)
    return t_c * B @ B.T
