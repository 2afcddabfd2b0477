import csv

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec

from oracles import analytic_gramian_zero_A, planted_matrix
from turnpike.errors import ArgumentError, DecompositionError
from turnpike.models import get_model
from turnpike.ocp_core import linearize_at, weighted_adjoint
from turnpike.spectral import (hautus_detectable, observability_constant, semigroup_bound,
                               spectral_split, stability_margin, transform_adjoint,
                               write_spectrum_csv)
from turnpike.steady import solve_steady


def check_split(A, split, tol=1e-8):
    P = split.projection
    n = A.shape[0]
    assert np.linalg.norm(P @ P - P) <= tol
    assert np.linalg.norm(P @ A - A @ P) <= tol
    lam = np.random.default_rng(0).standard_normal((3, n))
    lu, ls = transform_adjoint(split, lam)
    assert np.abs(lu @ split.basis_u.T + ls @ split.basis_s.T - lam).max() <= tol
    if split.k:
        assert np.linalg.eigvals(split.block_Au).real.min() >= -1e-10
    if split.k < n:
        assert np.linalg.eigvals(split.block_As).real.max() < 0


def same_multiset(a, b, tol):
    a, b = list(np.asarray(a, complex)), list(np.asarray(b, complex))
    if len(a) != len(b):
        return False
    for z in a:
        j = int(np.argmin([abs(z - w) for w in b]))
        if abs(z - b[j]) > tol:
            return False
        b.pop(j)
    return True


def test_diagonal_split():
    s = spectral_split(np.diag([1.0, -1.0]))
    assert np.allclose(s.projection, np.diag([1.0, 0.0]), atol=1e-14)
    assert s.block_Au == pytest.approx(np.array([[1.0]]))
    assert s.block_As == pytest.approx(np.array([[-1.0]]))
    assert s.k == 1 and s.gap == pytest.approx(2.0)


def test_hurwitz_has_no_unstable_part():
    A = np.array([[-1.0, 3.0], [0.0, -2.0]])
    s = spectral_split(A)
    assert s.k == 0 and np.all(s.projection == 0)
    assert same_multiset(np.linalg.eigvals(s.block_As), [-1, -2], 1e-12)
    assert np.allclose(s.basis_s @ s.block_As @ s.basis_s.T, A, atol=1e-12)


def test_two_by_two_projector_by_hand():
    # eigenvectors (1, 0) for +1 and (1, -2) for -1: P = [[1, 1/2], [0, 0]]
    A = np.array([[1.0, 1.0], [0.0, -1.0]])
    s = spectral_split(A)
    assert np.allclose(s.projection, [[1.0, 0.5], [0.0, 0.0]], atol=1e-14)
    lam = np.array([0.3, -0.8])
    lu, ls = transform_adjoint(s, lam)
    assert np.allclose(s.basis_u @ lu, s.projection @ lam, atol=1e-14)
    # lam = alpha (1, 0) + beta (1, -2) with alpha = 0.3 - 0.8 / 2; basis sign is free
    assert abs(lu[0]) == pytest.approx(0.1)


def test_transform_of_pure_components():
    A = planted_matrix(np.random.default_rng(2), [0.5, 1.0 + 2.0j], [-1.0, -2.0, -0.5 + 1j])
    s = spectral_split(A)
    lam = np.vstack([s.basis_s @ np.array([1.0, -2.0, 0.5, 3.0]) * t for t in (1.0, 2.0)])
    lu, _ = transform_adjoint(s, lam)
    assert np.abs(lu).max() < 1e-12
    lu, ls = transform_adjoint(s, s.basis_u[:, 0])
    assert np.allclose(lu, np.eye(s.k)[0], atol=1e-12) and np.abs(ls).max() < 1e-12


def test_eigenvalue_on_splitting_line_is_rejected():
    with pytest.raises(DecompositionError):
        spectral_split(np.diag([0.0, -1.0]))
    with pytest.raises(DecompositionError):
        spectral_split(np.diag([-0.5, -1.0]), margin=0.5)
    s = spectral_split(np.diag([-0.5, -1.0]), margin=0.75)
    assert s.k == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_planted_spectra_property(seed):
    rng = np.random.default_rng(seed)
    unstable = [rng.uniform(0.1, 2.0), complex(rng.uniform(0.1, 2), rng.uniform(0.2, 2))]
    stable = [-rng.uniform(0.1, 2.0), -rng.uniform(0.1, 2.0),
              complex(-rng.uniform(0.1, 2), rng.uniform(0.2, 2)), -rng.uniform(0.1, 2.0)]
    A = planted_matrix(rng, unstable, stable)
    B = rng.standard_normal((2, 8))
    s = spectral_split(A, B_star=B)
    assert s.k == 3
    check_split(A, s)
    pu = [unstable[0], unstable[1], np.conj(unstable[1])]
    ps = [stable[0], stable[1], stable[2], np.conj(stable[2]), stable[3]]
    assert same_multiset(np.linalg.eigvals(s.block_Au), pu, 1e-8)
    assert same_multiset(np.linalg.eigvals(s.block_As), ps, 1e-8)
    assert same_multiset(np.concatenate([np.linalg.eigvals(s.block_Au),
                                         np.linalg.eigvals(s.block_As)]),
                         np.linalg.eigvals(A), 1e-8)
    assert np.allclose(s.block_Bu, B @ s.basis_u) and s.block_Bs.shape == (2, 5)


def test_hautus_examples():
    A = np.diag([1.0, -1.0])
    assert hautus_detectable(A, [[1.0, 0.0]]) == (True, [])
    ok, wit = hautus_detectable(A, [[0.0, 1.0]])
    assert not ok and len(wit) == 1 and wit[0] == pytest.approx(1.0)
    assert hautus_detectable(np.diag([-1.0, -2.0]), np.zeros((1, 2)))[0]


def test_stability_margin_examples():
    assert stability_margin(np.diag([-2.0, -1.0])) == pytest.approx(-1.0)
    assert stability_margin(np.diag([1.0, -1.0])) == pytest.approx(1.0)


def test_heat_linearization_has_negative_margin():
    m = get_model("heat2d", nx=12, ny=4)
    s = solve_steady(m.system, m.cost, opts=m.steady_options)
    A, _ = linearize_at(m.system, s.x_bar, s.u_bar)
    A_star = weighted_adjoint(m.system, A, m.adjoint_norm.W)
    assert stability_margin(A_star) < 0


def test_semigroup_bound_examples():
    b = semigroup_bound(-np.eye(3))
    assert b.valid and b.mu == pytest.approx(0.5) and b.M == pytest.approx(1.05)
    jordan = semigroup_bound(np.array([[-1.0, 1.0], [0.0, -1.0]]))
    assert jordan.valid and jordan.M > 1
    shear = semigroup_bound(np.array([[-1.0, 10.0], [0.0, -1.0]]))
    assert shear.M > 2  # transient growth of |exp(At)| is captured
    assert not semigroup_bound(np.diag([0.1, -1.0])).valid


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.booleans())
def test_semigroup_certificate_holds_on_samples(seed, normal):
    rng = np.random.default_rng(seed)
    n = 4
    if normal:
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Q @ np.diag(-rng.uniform(0.2, 3.0, n)) @ Q.T
    else:
        A = planted_matrix(rng, [], [-rng.uniform(0.2, 3.0) for _ in range(n)])
    b = semigroup_bound(A)
    assert b.valid
    if normal:
        assert b.M <= 1.05 + 1e-12
    for t in np.linspace(0, 10 / b.mu, 200):
        assert np.linalg.norm(sla.expm(A * t), 2) <= b.M * np.exp(-b.mu * t) + 1e-9


def test_observability_analytic_values():
    for t_c in (1.0, 2.0):
        c = observability_constant(np.zeros((1, 1)), np.ones((1, 1)), t_c)
        assert abs(c.alpha - t_c) <= 1e-10
        assert np.allclose(c.gramian, analytic_gramian_zero_A(np.ones((1, 1)), t_c))
    c = observability_constant(np.array([[-1.0, 0.5], [0.0, 2.0]]), np.zeros((2, 1)), 1.0)
    assert c.alpha == 0.0 and not c.controllable
    with pytest.raises(ArgumentError):
        observability_constant(np.zeros((1, 1)), np.ones((1, 1)), 0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_gramian_matches_quadrature_and_is_monotone(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 1))
    G = quad_vec(lambda s: sla.expm(A * s) @ B @ B.T @ sla.expm(A.T * s), 0.0, 1.0,
                 epsabs=1e-13, epsrel=1e-12)[0]
    c1 = observability_constant(A, B, 1.0)
    assert np.abs(c1.gramian - G).max() <= 1e-9 * max(1.0, np.abs(G).max())
    assert np.allclose(c1.gramian, c1.gramian.T, atol=1e-10)
    assert np.linalg.eigvalsh(c1.gramian).min() >= -1e-10
    alphas = [observability_constant(A, B, t).alpha for t in (0.5, 1.0, 1.5, 2.0)]
    assert all(b >= a - 1e-12 for a, b in zip(alphas, alphas[1:]))


def test_gramian_is_finite_for_stiff_generators():
    m = get_model("heat2d", nx=12, ny=4)
    A = m.system.lin_state_op.toarray() - np.eye(m.system.n_state)
    c = observability_constant(A, m.system.control_op.toarray(), 1.0)
    assert np.all(np.isfinite(c.gramian)) and c.alpha >= 0


def test_spectrum_csv(tmp_path):
    s = spectral_split(np.diag([1.0, -1.0, -3.0]))
    write_spectrum_csv(s, tmp_path / "spec.csv")
    rows = list(csv.DictReader(open(tmp_path / "spec.csv")))
    assert [r["side"] for r in rows] == ["stable", "stable", "unstable"]
    assert float(rows[0]["re"]) == -3.0
