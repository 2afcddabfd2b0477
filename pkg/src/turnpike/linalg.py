"""Small linear-algebra helpers that work for dense arrays and scipy.sparse alike."""

from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, LinearAlgebraError


def to_dense(A):
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def diagonal_of(A):
    """Return the diagonal of ``A`` if ``A`` is (structurally) diagonal, else None."""
    if sp.issparse(A):
        coo = A.tocoo()
        if np.all(coo.row == coo.col):
            return np.asarray(A.diagonal(), dtype=float)
        mask = coo.row != coo.col
        if not np.any(coo.data[mask]):
            return np.asarray(A.diagonal(), dtype=float)
        return None
    A = np.asarray(A, dtype=float)
    if A.ndim == 2 and A.shape[0] == A.shape[1]:
        d = np.diag(A)
        if np.count_nonzero(A - np.diag(d)) == 0:
            return d.copy()
    return None


class InnerProduct:
    """Weighted inner product ``<a, b> = a^T W b`` on R^n.

    Accepts a dense or sparse symmetric positive-definite weight. Batched
    methods act row-wise on ``(K, n)`` arrays.
    """

    def __init__(self, weight):
        if np.isscalar(weight):
            weight = np.array([[float(weight)]])
        if not sp.issparse(weight):
            weight = np.atleast_2d(np.asarray(weight, dtype=float))
        if weight.shape[0] != weight.shape[1]:
            raise ArgumentError(f"weight must be square, got {weight.shape}")
        self.W = weight
        self.dim = weight.shape[0]
        self.diag = diagonal_of(weight)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    def check(self, sym_tol=1e-12):
        """Raise ArgumentError unless W is symmetric positive definite."""
        if self.diag is not None:
            if np.any(self.diag <= 0):
                raise ArgumentError("weight matrix is not positive definite")
            return
        W = to_dense(self.W)
        scale = max(1.0, np.abs(W).max())
        if np.abs(W - W.T).max() > sym_tol * scale:
            raise ArgumentError("weight matrix is not symmetric")
        if np.linalg.eigvalsh(W).min() <= 0:
            raise ArgumentError("weight matrix is not positive definite")

    def apply(self, V):
        V = np.asarray(V, dtype=float)
        if self.diag is not None:
            return V * self.diag
        if V.ndim == 1:
            return np.asarray(self.W @ V).ravel()
        return np.asarray(self.W @ V.T).T

    def inner(self, a, b):
        return float(np.dot(np.ravel(a), np.ravel(self.apply(b))))

    def norm(self, v):
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def norms(self, V):
        """Row-wise norms of a ``(K, n)`` array."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        sq = np.einsum("ij,ij->i", V, self.apply(V))
        return np.sqrt(np.maximum(sq, 0.0))

    @cached_property
    def _factor(self):
        if sp.issparse(self.W):
            return ("sparse", spla.splu(sp.csc_matrix(self.W)))
        try:
            return ("dense", sla.cho_factor(self.W))
        except np.linalg.LinAlgError as exc:
            raise LinearAlgebraError("weight matrix is not positive definite") from exc

    def solve(self, P):
        """Riesz map: return ``W^{-1} P`` (row-wise for 2-D input)."""
        P = np.asarray(P, dtype=float)
        if self.diag is not None:
            return P / self.diag
        kind, fac = self._factor
        rhs = P if P.ndim == 1 else P.T
        out = fac.solve(rhs) if kind == "sparse" else sla.cho_solve(fac, rhs)
        return out if P.ndim == 1 else out.T

    @cached_property
    def sqrt(self):
        if self.diag is not None:
            return np.diag(np.sqrt(self.diag))
        w, V = np.linalg.eigh(to_dense(self.W))
        return (V * np.sqrt(w)) @ V.T

    @cached_property
    def inv_sqrt(self):
        if self.diag is not None:
            return np.diag(1.0 / np.sqrt(self.diag))
        w, V = np.linalg.eigh(to_dense(self.W))
        return (V / np.sqrt(w)) @ V.T

    def adjoint_of(self, A, domain=None):
        """Adjoint of ``A: (R^k, domain) -> (R^n, self)`` as a ``k x n`` matrix.

        ``A^* = W_dom^{-1} A^T W``; ``domain`` defaults to ``self``.
        """
        domain = self if domain is None else domain
        M = to_dense(self.W @ A)
        return domain.solve(M).T


def weighted_op_norm(D, dom, rng):
    """Operator norm of ``D`` from ``(R^k, dom)`` to ``(R^n, rng)``.

    Computed as the spectral norm of ``rng^{1/2} D dom^{-1/2}``.
    """
    d = diagonal_of(D) if D.shape[0] == D.shape[1] else None
    if d is not None and dom.diag is not None and rng.diag is not None:
        return float(np.max(np.abs(d) * np.sqrt(rng.diag / dom.diag), initial=0.0))
    Dd = to_dense(D)
    if not np.any(Dd):
        return 0.0
    return float(np.linalg.norm(rng.sqrt @ Dd @ dom.inv_sqrt, 2))
