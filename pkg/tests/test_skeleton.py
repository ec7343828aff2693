import dataclasses

import numpy as np
import pytest

from mvsde.core import Control, MdpControl, ModelSpec, make_time_grid, null_control
from mvsde.errors import DivergenceError, NoConvergenceError
from mvsde.models import get_model
from mvsde.skeleton import (
    PicardConfig,
    jacobian_b_x,
    solve_ldp_skeleton,
    solve_limit_ode,
    solve_mdp_skeleton,
)

E = 2.718281828459045


def test_limit_ode_hits_exponential(example11):
    grid = make_time_grid(1.0, 800)
    path = solve_limit_ode(example11, grid)
    assert abs(path.terminal[0] - E) < 1e-12


def test_limit_ode_midpoints_shape(example11):
    grid = make_time_grid(1.0, 50)
    path, mids = solve_limit_ode(example11, grid, return_midpoints=True)
    assert mids.shape == (50, 1)
    # midpoint of the first cell sits between the endpoints
    assert path.values[0, 0] < mids[0, 0] < path.values[1, 0]


def test_limit_ode_divergence_guard():
    blowup = ModelSpec(
        name="blowup",
        dim=1,
        initial=np.array([2.0]),
        drift=lambda t, x, law: x**2,
        diffusion=lambda t, x, law: np.eye(1),
    )
    with pytest.raises(DivergenceError):
        solve_limit_ode(blowup, make_time_grid(1.0, 200))


def test_null_control_is_exact_fixed_point(example11):
    grid = make_time_grid(1.0, 200)
    sol = solve_ldp_skeleton(example11, grid, null_control(grid, 1, 0))
    assert sol.iterations == 1
    assert sol.residual == 0.0
    assert sol.converged
    np.testing.assert_array_equal(
        sol.path.values, solve_limit_ode(example11, grid).values
    )


def test_constant_brownian_control_shifts_by_t(example11):
    # drift depends on the (frozen) law only, so y = xbar + t exactly
    grid = make_time_grid(1.0, 800)
    ctl = Control(grid, np.ones((800, 1)), np.ones((800, 0)), psi_bounds=(1.0, 1.0))
    sol = solve_ldp_skeleton(example11, grid, ctl)
    assert abs(sol.path.terminal[0] - (E + 1.0)) < 1e-10
    assert sol.converged


def test_constant_jump_tilt_integrates_mass(pure_jump):
    # b = 0, G = 1, nu({1}) = 1: y(T) = (psi - 1) T exactly
    grid = make_time_grid(1.0, 100)
    c = 1.75
    ctl = Control(grid, np.zeros((100, 1)), np.full((100, 1), c), psi_bounds=(0.5, 2.0))
    sol = solve_ldp_skeleton(pure_jump, grid, ctl)
    assert sol.path.terminal[0] == pytest.approx(c - 1.0, abs=1e-12)


def test_picard_reports_non_convergence():
    spec = get_model("linear_gaussian")  # drift depends on the state itself
    grid = make_time_grid(1.0, 100)
    ctl = Control(grid, np.ones((100, 1)), np.ones((100, 0)), psi_bounds=(1.0, 1.0))
    strict = PicardConfig(max_iter=1, tol=1e-12)
    with pytest.raises(NoConvergenceError):
        solve_ldp_skeleton(spec, grid, ctl, config=strict)
    soft = PicardConfig(max_iter=1, tol=1e-12, raise_on_fail=False)
    sol = solve_ldp_skeleton(spec, grid, ctl, config=soft)
    assert not sol.converged
    assert sol.residual > 1e-12


def test_jacobian_exact_override_matches_fd(logistic):
    x = np.array([0.37])
    exact = jacobian_b_x(logistic, 0.2, x)
    np.testing.assert_allclose(exact, [[1.0 - 2 * 0.37]], atol=1e-12)
    fd = jacobian_b_x(dataclasses.replace(logistic, drift_jacobian=None), 0.2, x)
    np.testing.assert_allclose(fd, exact, atol=1e-8)


def test_mdp_skeleton_linear_response(example11):
    # A(t) = 1 for this model, so phi = 1 gives m(t) = e^t - 1
    grid = make_time_grid(1.0, 800)
    ctl = MdpControl(grid, np.ones((800, 1)), np.ones((800, 0)))
    m = solve_mdp_skeleton(example11, grid, ctl)
    assert abs(m.terminal[0] - (E - 1.0)) < 1e-12


def test_mdp_skeleton_null_is_zero(logistic):
    grid = make_time_grid(1.0, 60)
    from mvsde.core import null_mdp_control

    m = solve_mdp_skeleton(logistic, grid, null_mdp_control(grid, 1, 1))
    assert not m.values.any()


def test_mdp_skeleton_jump_tilt(pure_jump):
    # m' = tilt (G = 1, mass 1, A = 0): constant tilt integrates linearly
    grid = make_time_grid(1.0, 100)
    ctl = MdpControl(grid, np.zeros((100, 1)), np.full((100, 1), -0.6))
    m = solve_mdp_skeleton(pure_jump, grid, ctl)
    assert m.terminal[0] == pytest.approx(-0.6, abs=1e-12)
