import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_directional, scalar_lq_extremal
from turnpike.dynamic import (SolveOptions, adjoint_solve, control_inner, discrete_objective,
                              forward_solve, make_grid, reduced_gradient, solve_ocp)
from turnpike.errors import ArgumentError, StiffStepError
from turnpike.models import get_model
from turnpike.ocp_core import ControlSystem, CostFunctional
from turnpike.steady import solve_steady


def objective_of(model, grid):
    def phi(u):
        return discrete_objective(model.cost, forward_solve(model.system, u, model.x0, grid), u,
                                  grid[1] - grid[0])
    return phi


def gradient_errors(model, T, dt, n_dirs, seed, base_scale=1.0):
    rng = np.random.default_rng(seed)
    grid = make_grid(T, dt)
    N, m = len(grid) - 1, model.system.n_control
    u = base_scale * rng.standard_normal((N, m))
    X = forward_solve(model.system, u, model.x0, grid)
    g = reduced_gradient(model.system, model.cost, X, u,
                         adjoint_solve(model.system, model.cost, X, u, grid))
    phi = objective_of(model, grid)
    errs = []
    for _ in range(n_dirs):
        d = rng.standard_normal((N, m))
        exact = control_inner(model.system, dt, g, d)
        fd = central_directional(phi, u, d, 1e-5)
        errs.append(abs(exact - fd) / max(abs(fd), 1e-12))
    return errs


def test_forward_zero_input_stays_zero():
    for m in (get_model("zero"), get_model("heat2d", nx=6, ny=3)):
        grid = make_grid(1.0, 0.1)
        X = forward_solve(m.system, np.zeros((10, m.system.n_control)),
                          np.zeros(m.system.n_state), grid)
        assert np.all(X == 0)


def test_implicit_euler_single_step():
    s = ControlSystem(1, 1, [[-1.0]], [[1.0]])
    X = forward_solve(s, np.zeros((1, 1)), [1.0], make_grid(0.1, 0.1))
    assert X[1, 0] == pytest.approx(1 / 1.1, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 0.5), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_linear_forward_matches_recursion(a, b, u, x0):
    dt, N = 0.05, 40
    s = ControlSystem(1, 1, [[a]], [[b]])
    X = forward_solve(s, np.full((N, 1), u), [x0], make_grid(N * dt, dt))
    x = x0
    for k in range(N):
        x = (x + dt * b * u) / (1 - dt * a)
        assert X[k + 1, 0] == pytest.approx(x, rel=1e-12, abs=1e-12)


def test_stiff_step_error_reports_step_index():
    s = ControlSystem(1, 1, [[0.0]], [[0.0]], lambda x, u: np.exp(x),
                      lambda x, u: np.diag(np.exp(x)), lambda x, u: np.zeros((1, 1)))
    # y - exp(y) <= -1 < 1 = x_0: the first implicit step has no solution
    with pytest.raises(StiffStepError) as ei:
        forward_solve(s, np.zeros((3, 1)), [1.0], make_grid(3.0, 1.0))
    assert ei.value.step_index == 0


def test_zero_cost_gives_zero_adjoint():
    s = ControlSystem(1, 1, [[-1.0]], [[1.0]])
    c = CostFunctional.quadratic([[0.0]], [1.0], [[0.0]], [0.0])
    grid = make_grid(2.0, 0.1)
    u = np.ones((20, 1))
    lam = adjoint_solve(s, c, forward_solve(s, u, [1.0], grid), u, grid)
    assert np.all(lam == 0)


def test_adjoint_on_steady_inputs_relaxes_backward_to_steady_value():
    m = get_model("lq-tracking")
    stdy = solve_steady(m.system, m.cost)
    dt, T = 0.05, 10.0
    grid = make_grid(T, dt)
    N = len(grid) - 1
    X = np.full((N + 1, 1), stdy.x_bar[0])
    lam = adjoint_solve(m.system, m.cost, X, np.full((N, 1), stdy.u_bar[0]), grid)
    # (1 + dt) p_k = p_{k+1} + dt / 2  =>  p_k = 1/2 (1 - (1 + dt)^-(N - k))
    k = np.arange(N + 1)
    assert np.abs(lam[:, 0] - 0.5 * (1 - (1 + dt) ** (-(N - k)))).max() < 1e-14
    # rate -> exp(-(T - t)), the eigenvalue of A* = -1
    assert lam[N - 20, 0] == pytest.approx(0.5 * (1 - np.exp(-1.0)), abs=0.02)


def test_adjoint_error_against_closed_form_is_first_order():
    m = get_model("lq-tracking")
    stdy = solve_steady(m.system, m.cost)
    errs = []
    for dt in (0.02, 0.01):
        tr = solve_ocp(m.system, m.cost, m.x0, 5.0, SolveOptions(dt=dt, grad_tol=1e-10),
                       steady=stdy)
        _, _, lam = scalar_lq_extremal(-1, 1, 1, 1, 1, 0, 5.0, tr.grid)
        errs.append(np.abs(tr.adjoints[:, 0] - lam).max())
    assert 1.6 < errs[0] / errs[1] < 2.4


@pytest.mark.parametrize("name,scale", [("lq-tracking", 1.0), ("cubic1d", 0.5),
                                        ("nonturnpike", 1.0)])
def test_reduced_gradient_matches_central_differences(name, scale):
    m = get_model(name)
    m.x0 = np.random.default_rng(11).standard_normal(m.system.n_state)
    assert max(gradient_errors(m, 2.0, 0.05, 5, 0, scale)) <= 1e-5


def test_reduced_gradient_heat_small_grid():
    m = get_model("heat2d", nx=6, ny=3)
    assert max(gradient_errors(m, 1.0, 0.1, 5, 1)) <= 1e-5


def test_zero_problem_gradient_and_solve():
    m = get_model("zero")
    grid = make_grid(10.0, 0.05)
    u = np.zeros((200, 1))
    X = forward_solve(m.system, u, m.x0, grid)
    g = reduced_gradient(m.system, m.cost, X, u, adjoint_solve(m.system, m.cost, X, u, grid))
    assert np.all(g == 0)
    tr = solve_ocp(m.system, m.cost, m.x0, 10.0, SolveOptions(dt=0.05))
    assert tr.solver_info["iterations"] == 0 and tr.solver_info["converged"]
    assert np.all(tr.states == 0) and np.all(tr.controls == 0) and np.all(tr.adjoints == 0)


def test_lq_interior_sits_on_turnpike():
    m = get_model("lq-tracking")
    stdy = solve_steady(m.system, m.cost)
    tr = solve_ocp(m.system, m.cost, m.x0, 20.0, SolveOptions(dt=0.05, grad_tol=1e-9),
                   steady=stdy)
    mid = (tr.grid >= 5) & (tr.grid <= 15)
    assert np.abs(tr.states[mid, 0] - stdy.x_bar[0]).max() < 1e-3
    info = tr.solver_info
    assert info["converged"] and info["grad_norm"] <= 1e-9
    assert np.array_equal(tr.states[0], m.x0)
    assert np.abs(tr.adjoints[-1]).max() <= 1e-14
    h = np.array(info["objective_history"])
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


def test_refinement_changes_objective_at_first_order():
    m = get_model("lq-tracking")
    stdy = solve_steady(m.system, m.cost)
    phis = [solve_ocp(m.system, m.cost, m.x0, 10.0, SolveOptions(dt=dt, grad_tol=1e-11),
                      steady=stdy).solver_info["objective"]
            for dt in (0.1, 0.05, 0.025, 0.0125)]
    d = np.diff(phis)
    ratios = d[:-1] / d[1:]
    # first order gives 2, second order 4; the coarse triple is still pre-asymptotic
    assert 1.5 < ratios[0] < 3.0
    assert abs(ratios[1] - 2) < abs(ratios[0] - 2)


def test_iteration_cap_returns_flagged_best_iterate():
    m = get_model("cubic1d")
    tr = solve_ocp(m.system, m.cost, m.x0, 10.0, SolveOptions(dt=0.05, max_outer_iters=2))
    info = tr.solver_info
    assert not info["converged"] and info["status"] == "max_iterations"
    assert info["objective"] <= info["objective_history"][0]


def test_solver_is_deterministic():
    m = get_model("cubic1d")
    a = solve_ocp(m.system, m.cost, m.x0, 5.0, SolveOptions(dt=0.05))
    b = solve_ocp(m.system, m.cost, m.x0, 5.0, SolveOptions(dt=0.05))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.adjoints, b.adjoints)


def test_grid_and_option_validation():
    assert len(make_grid(1.0, 0.1)) == 11
    with pytest.raises(ArgumentError):
        make_grid(1.0, 0.3)
    with pytest.raises(ArgumentError):
        make_grid(-1.0, 0.1)
    with pytest.raises(ArgumentError):
        SolveOptions(grad_tol=0.0)
    with pytest.raises(ArgumentError):
        SolveOptions(armijo=1.5)
