"""Stable/unstable splitting of ``A*`` and related certificates.

The spectral projection onto the unstable invariant subspace is built from
two ordered real Schur forms (unstable block first, then stable block
first) instead of a resolvent contour integral; in finite dimensions both
give the same projector.
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, DecompositionError
from .linalg import to_dense

TIE_TOL = 1e-8


@dataclass
class SpectralSplit:
    projection: np.ndarray
    basis_u: np.ndarray
    basis_s: np.ndarray
    block_Au: np.ndarray
    block_As: np.ndarray
    block_Bu: np.ndarray   # B* restricted to Y_u, shape (m, k)
    block_Bs: np.ndarray   # B* restricted to Y_s, shape (m, n - k)
    gap: float
    eigenvalues: np.ndarray
    margin: float = 0.0

    @property
    def k(self):
        return self.basis_u.shape[1]

    def to_dict(self):
        return {
            "k_unstable": self.k,
            "n": self.projection.shape[0],
            "gap": self.gap,
            "margin": self.margin,
            "spectrum_u": _complex_list(np.linalg.eigvals(self.block_Au)) if self.k else [],
            "spectrum_s": _complex_list(np.linalg.eigvals(self.block_As))
            if self.block_As.size else [],
        }


@dataclass
class SemigroupBound:
    M: float
    mu: float
    valid: bool

    def to_dict(self):
        return {"M": self.M, "mu": self.mu, "valid": self.valid}


@dataclass
class ObservabilityCertificate:
    t_c: float
    alpha: float
    gramian: np.ndarray

    @property
    def controllable(self):
        return self.alpha > 1e-12

    def to_dict(self):
        return {"t_c": self.t_c, "alpha": self.alpha, "controllable": self.controllable,
                "gramian": self.gramian.tolist()}


def _complex_list(z):
    return [[float(v.real), float(v.imag)] for v in np.sort_complex(np.asarray(z))]


def _square(A, what="A_star"):
    A = np.atleast_2d(to_dense(A))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError(f"{what} must be square, got {A.shape}")
    return A


def spectral_split(A_star, margin=0.0, B_star=None):
    """Split ``A_star`` at ``Re s = -margin``; optional ``B_star`` (m x n) is restricted too."""
    A = _square(A_star)
    n = A.shape[0]
    ev = np.linalg.eigvals(A)
    line = -margin
    near = ev[np.abs(ev.real - line) <= TIE_TOL]
    if near.size:
        raise DecompositionError(
            f"eigenvalue(s) {near} lie on the splitting line Re s = {line}; "
            "the spectrum cannot be separated")
    _, Zu, k = sla.schur(A, output="real", sort=lambda re, im: re >= line)
    _, Zs, ks = sla.schur(A, output="real", sort=lambda re, im: re < line)
    if k + ks != n:
        raise DecompositionError("ordered Schur forms disagree on the split")
    Vu, Vs = Zu[:, :k], Zs[:, :n - k]
    V = np.hstack([Vu, Vs])
    Vinv = np.linalg.inv(V)
    P = Vu @ Vinv[:k]
    Au = Vu.T @ A @ Vu
    As = Vs.T @ A @ Vs
    if B_star is None:
        Bs_full = np.zeros((0, n))
    else:
        Bs_full = np.atleast_2d(to_dense(B_star))
        if Bs_full.shape[1] != n:
            raise ArgumentError("B_star must have n columns")
    eu, es = ev[ev.real >= line], ev[ev.real < line]
    gap = float(np.min(np.abs(eu.real[:, None] - es.real[None, :]))) if eu.size and es.size else np.inf
    return SpectralSplit(P, Vu, Vs, Au, As, Bs_full @ Vu, Bs_full @ Vs, gap, ev, margin)


def transform_adjoint(split, lam):
    """Coordinates ``(lam_u, lam_s)`` of ``lam(t)`` in the ``(Y_u, Y_s)`` bases (row-wise)."""
    lam = np.asarray(lam, dtype=float)
    single = lam.ndim == 1
    L = np.atleast_2d(lam)
    n = split.projection.shape[0]
    if L.shape[1] != n:
        raise ArgumentError(f"adjoint rows must have length {n}")
    V = np.hstack([split.basis_u, split.basis_s])
    C = np.linalg.solve(V, L.T).T
    lu, ls = C[:, :split.k], C[:, split.k:]
    return (lu[0], ls[0]) if single else (lu, ls)


def hautus_detectable(A_star, B_star, rtol=1e-10):
    """Hautus test on every eigenvalue with ``Re s >= 0``; returns ``(ok, witnesses)``."""
    A = _square(A_star).astype(complex)
    n = A.shape[0]
    C = np.atleast_2d(to_dense(B_star)).astype(complex)
    if C.shape[1] != n:
        raise ArgumentError("B_star must have n columns")
    witnesses = []
    for s in np.linalg.eigvals(A):
        if s.real < 0:
            continue
        sv = np.linalg.svd(np.vstack([A - s * np.eye(n), C]), compute_uv=False)
        if np.sum(sv > rtol * max(sv[0], 1e-300)) < n:
            witnesses.append(complex(s))
    return not witnesses, witnesses


def stability_margin(A_star):
    """Largest real part of the spectrum."""
    return float(np.max(np.linalg.eigvals(_square(A_star)).real))


def semigroup_bound(A_star, n_samples=200, safety=1.05):
    """``(M, mu)`` with ``|exp(A* t)| <= M exp(-mu t)``; ``mu`` is half the margin."""
    A = _square(A_star)
    margin = stability_margin(A)
    if margin >= 0:
        return SemigroupBound(np.inf, 0.0, False)
    mu = -margin / 2.0
    ts = np.geomspace(1e-3, 20.0 / mu, n_samples)
    sup = 1.0  # t = 0
    for t in ts:
        sup = max(sup, np.linalg.norm(sla.expm(A * t), 2) * np.exp(mu * t))
    return SemigroupBound(float(sup * safety), float(mu), True)


def observability_constant(A, B, t_c):
    """Controllability Gramian over ``[0, t_c]`` and its smallest eigenvalue.

    On a short step ``h = t_c / 2^k`` (with ``|A| h <= 1/2``) the block
    exponential of ``[[A, B B^T], [0, -A^T]] h`` gives ``E = exp(A h)`` and
    ``G(h) = F12 exp(A^T h)``. Doubling ``G(2t) = G(t) + E(t) G(t) E(t)^T``
    then reaches ``t_c`` without forming ``exp(-A^T t_c)``, which overflows
    for stiff ``A``.
    """
    if not t_c > 0:
        raise ArgumentError("t_c must be positive")
    A = _square(A, "A")
    n = A.shape[0]
    B = np.atleast_2d(to_dense(B)).reshape(n, -1)
    nrm = np.linalg.norm(A, 1) * t_c
    k = int(np.ceil(np.log2(2.0 * nrm))) if nrm > 0.5 else 0
    h = t_c / 2 ** k
    Z = np.zeros((n, n))
    F = sla.expm(np.block([[A, B @ B.T], [Z, -A.T]]) * h)
    E = sla.expm(A * h)
    G = F[:n, n:] @ E.T
    for _ in range(k):
        G = G + E @ G @ E.T
        E = E @ E
    G = 0.5 * (G + G.T)
    alpha = float(np.linalg.eigvalsh(G).min())
    return ObservabilityCertificate(float(t_c), max(alpha, 0.0), G)


def write_spectrum_csv(split, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re", "im", "side"])
        for s in np.sort_complex(split.eigenvalues):
            side = "unstable" if s.real >= -split.margin else "stable"
            wr.writerow([f"{s.real:.17g}", f"{s.imag:.17g}", side])
