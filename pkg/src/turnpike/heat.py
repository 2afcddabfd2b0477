"""Boundary-controlled semilinear heat equation on a rectangle.

    x' = Laplace(x) - x^3   in Omega = [0, lx] x [0, ly]
    dx/dnu = u              on the boundary
    J = 1/2 |x - x_d|^2_{L2(Omega)} + 1/2 |u|^2_{L2(boundary)}

Discretised with the 5-point Laplacian on the ``(nx+1) x (ny+1)`` node grid.
The Neumann condition is imposed through ghost nodes: eliminating the
exterior node leaves ``2/h_normal * u`` in the boundary row. Corner nodes sit
on two edges and receive both contributions from their single control value.
Node ``(i, j)`` (``omega = (i*hx, j*hy)``) has index ``j*(nx+1) + i``.
"""

import csv
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError
from .linalg import InnerProduct
from .ocp_core import ControlSystem, CostFunctional


@dataclass(frozen=True)
class HeatConfig:
    lx: float = 3.0
    ly: float = 1.0
    nx: int = 30
    ny: int = 10
    T: float = 10.0
    dt: float = 0.1
    bump_center: tuple = (1.5, 0.5)
    bump_scale: float = 10.0 / 3.0
    bump_amplitude: float = 10.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ArgumentError("heat grid needs at least 3 cells per side")
        if self.lx <= 0 or self.ly <= 0 or self.dt <= 0 or self.T <= 0:
            raise ArgumentError("domain sizes, T and dt must be positive")
        object.__setattr__(self, "bump_center", tuple(float(c) for c in self.bump_center))

    @property
    def hx(self):
        return self.lx / self.nx

    @property
    def hy(self):
        return self.ly / self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    def to_dict(self):
        d = asdict(self)
        d["bump_center"] = list(self.bump_center)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "bump_center" in known:
            known["bump_center"] = tuple(known["bump_center"])
        return cls(**known)


@dataclass
class ReferenceField:
    values: np.ndarray


@dataclass
class HeatWeights:
    l2: InnerProduct
    h1: InnerProduct
    boundary: InnerProduct
    boundary_nodes: np.ndarray

    def trace(self, v):
        return np.asarray(v)[..., self.boundary_nodes]


def bump(s, amplitude=10.0):
    """``amplitude * exp(1 - 1/(1 - s^2))`` for ``s < 1``, zero otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def node_coordinates(config):
    w1 = np.linspace(0.0, config.lx, config.nx + 1)
    w2 = np.linspace(0.0, config.ly, config.ny + 1)
    W1, W2 = np.meshgrid(w1, w2)  # shape (ny+1, nx+1), row j, column i
    return W1.ravel(), W2.ravel()


def reference_field(config):
    w1, w2 = node_coordinates(config)
    c1, c2 = config.bump_center
    s = config.bump_scale * np.hypot(w1 - c1, w2 - c2)
    return ReferenceField(bump(s, config.bump_amplitude))


def _neumann_second_difference(n, h):
    main = np.full(n + 1, -2.0)
    upper = np.ones(n)
    lower = np.ones(n)
    upper[0] = 2.0   # ghost node mirrored at the left end
    lower[-1] = 2.0  # and at the right end
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h ** 2


def _trapezoid_weights(n, h):
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    return w


def boundary_nodes(config):
    nx, ny = config.nx, config.ny
    idx = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            if i in (0, nx) or j in (0, ny):
                idx.append(j * (nx + 1) + i)
    return np.array(idx, dtype=int)


def build_heat_system(config=None):
    """Assemble ``(ControlSystem, CostFunctional, HeatWeights)``."""
    config = config or HeatConfig()
    nx, ny, hx, hy = config.nx, config.ny, config.hx, config.hy
    Dxx = _neumann_second_difference(nx, hx)
    Dyy = _neumann_second_difference(ny, hy)
    lap = (sp.kron(sp.identity(ny + 1), Dxx) + sp.kron(Dyy, sp.identity(nx + 1))).tocsr()

    wx, wy = _trapezoid_weights(nx, hx), _trapezoid_weights(ny, hy)
    mass = np.kron(wy, wx)
    M = sp.diags(mass, format="csr")

    bnodes = boundary_nodes(config)
    n, m = config.n_nodes, len(bnodes)
    coeff = np.zeros(m)
    bweight = np.zeros(m)
    for col, node in enumerate(bnodes):
        i, j = node % (nx + 1), node // (nx + 1)
        if i in (0, nx):
            coeff[col] += 2.0 / hx
            bweight[col] += wy[j]
        if j in (0, ny):
            coeff[col] += 2.0 / hy
            bweight[col] += wx[i]
    Bc = sp.csr_matrix((coeff, (bnodes, np.arange(m))), shape=(n, m))
    Mb = sp.diags(bweight, format="csr")

    stiffness = -(M @ lap)
    stiffness = (0.5 * (stiffness + stiffness.T)).tocsr()
    H1 = (M + stiffness).tocsr()

    zero_u = sp.csr_matrix((n, m))

    def nonlinearity(x, u):
        return -x ** 3

    def jac_x(x, u):
        return sp.diags(-3.0 * x ** 2, format="csr")

    def jac_u(x, u):
        return zero_u

    def second_order(x, u, p):
        return (sp.diags(-6.0 * x * p, format="csr"), sp.csr_matrix((n, m)),
                sp.csr_matrix((m, m)))

    system = ControlSystem(n, m, lap, Bc, nonlinearity, jac_x, jac_u,
                           state_inner=M, control_inner=Mb, h1_inner=H1,
                           second_order=second_order, name="heat2d")
    xd = reference_field(config).values
    cost = CostFunctional.quadratic(M, xd, Mb, np.zeros(m))
    weights = HeatWeights(InnerProduct(M), InnerProduct(H1), InnerProduct(Mb), bnodes)
    return system, cost, weights


def discrete_norms(weights, v):
    """``(l2, h1, boundary_l2)`` of a nodal field; a boundary-length vector
    only gets its ``boundary_l2`` (the other two are NaN)."""
    v = np.asarray(v, dtype=float)
    if v.shape == (weights.boundary.dim,) and weights.boundary.dim != weights.l2.dim:
        return float("nan"), float("nan"), weights.boundary.norm(v)
    if v.shape != (weights.l2.dim,):
        raise ArgumentError(f"vector of length {v.size} matches neither grid nor boundary")
    return weights.l2.norm(v), weights.h1.norm(v), weights.boundary.norm(weights.trace(v))


def write_reference_csv(config, path):
    """Reference field as ``omega1, omega2, x_d`` rows (gnuplot ``splot`` ready)."""
    w1, w2 = node_coordinates(config)
    xd = reference_field(config).values
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["omega1", "omega2", "x_d"])
        nx1 = config.nx + 1
        for k in range(len(xd)):
            wr.writerow([f"{w1[k]:.10g}", f"{w2[k]:.10g}", f"{xd[k]:.17g}"])
            if (k + 1) % nx1 == 0:
                fh.write("\n")
