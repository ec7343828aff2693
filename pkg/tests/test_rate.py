import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsde.core import (
    Control,
    MdpControl,
    ModelSpec,
    Path,
    make_time_grid,
    null_control,
    null_mdp_control,
)
from mvsde.errors import InvalidArgumentError, UnsupportedError
from mvsde.levy import IntensityMeasure
from mvsde.rate import (
    EventSpec,
    OptimizerConfig,
    ell,
    ldp_rate,
    mdp_cost,
    mdp_rate,
    q1_cost,
    q2_cost,
)
from mvsde.skeleton import solve_mdp_skeleton

E = 2.718281828459045


def test_ell_frozen_values():
    assert ell(1.0) == 0.0
    assert ell(0.0) == 1.0
    assert ell(2.0) == pytest.approx(0.386294361120, abs=1e-12)
    assert ell(-0.1) == np.inf
    # strictly convex with minimum at 1
    assert ell(0.5) > 0 and ell(1.5) > 0


def test_costs_vanish_on_null_controls(logistic):
    grid = make_time_grid(1.0, 30)
    nu = logistic.intensity
    ctl = null_control(grid, 1, 1)
    assert q1_cost(ctl) == 0.0
    assert q2_cost(ctl, nu) == 0.0
    assert mdp_cost(null_mdp_control(grid, 1, 1), nu) == 0.0


def test_q1_quadrature():
    grid = make_time_grid(1.0, 4)
    ctl = Control(grid, 2.0 * np.ones((4, 1)), np.ones((4, 0)), psi_bounds=(1.0, 1.0))
    assert q1_cost(ctl) == pytest.approx(0.5 * 4.0)  # 1/2 |phi|^2 T


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_q2_nonnegative_zero_only_at_one(seed):
    grid = make_time_grid(1.0, 8)
    nu = IntensityMeasure(np.array([[1.0], [2.0]]), np.array([0.5, 1.5]))
    rng = np.random.default_rng(seed)
    psi = rng.uniform(0.05, 3.0, size=(8, 2))
    ctl = Control(grid, np.zeros((8, 1)), psi, psi_bounds=(0.05, 3.0))
    cost = q2_cost(ctl, nu)
    assert cost >= 0.0
    assert (cost == 0.0) == bool(np.all(psi == 1.0))


def test_q2_requires_intensity(logistic):
    grid = make_time_grid(1.0, 4)
    ctl = null_control(grid, 1, 1)
    with pytest.raises(InvalidArgumentError):
        q2_cost(ctl, None)


def test_event_excess_and_indicator_signs():
    grid = make_time_grid(1.0, 2)
    path = Path(grid, np.array([[0.0], [0.5], [2.0]]), kind="linear")
    pin = EventSpec.pin([2.0], tol=0.5)
    assert pin.excess(path) <= 0.0
    assert pin.residual(path) == 0.0
    far = EventSpec.pin([3.0], tol=0.5)
    assert far.excess(path) == pytest.approx(0.5)
    half = EventSpec.halfspace([1.0], 1.5)
    assert half.excess(path) <= 0.0
    assert EventSpec.halfspace([1.0], 2.5).residual(path) == pytest.approx(0.5)


def test_pin_indicator_needs_positive_tol():
    ev = EventSpec.pin([1.0], tol=0.0)
    with pytest.raises(InvalidArgumentError):
        ev.indicator(np.zeros((4, 1)))


def test_halfspace_indicator_forgives_float_dust():
    ev = EventSpec.halfspace([1.0], 1.0)
    terminal = np.array([[1.0 - 5e-17], [1.0 + 1e-12], [0.9]])
    hits = ev.indicator(terminal)
    assert hits.tolist() == [True, True, False]


def test_ldp_rate_gaussian_pin(example11):
    # brownian-only pin: cheapest drift phi is constant, J = (x_T - e)^2 / 2
    grid = make_time_grid(1.0, 400)
    event = EventSpec.pin([E + 0.5], tol=1e-3)
    res = ldp_rate(example11, grid, event, OptimizerConfig(seed=0))
    assert res.feasible
    assert res.value == pytest.approx(0.5 * 0.499**2, abs=2e-5)
    assert res.residual < 1e-6
    assert res.skeleton.terminal[0] == pytest.approx(E + 0.499, abs=1e-3)
    selected = [t for t in res.trace if t["selected"]]
    assert len(selected) == 1


def test_ldp_rate_halfspace(example11):
    grid = make_time_grid(1.0, 400)
    event = EventSpec.halfspace([1.0], E + 0.5)
    res = ldp_rate(example11, grid, event, OptimizerConfig(seed=0))
    assert res.feasible
    assert res.value == pytest.approx(0.125, abs=1e-4)


def test_ldp_rate_pure_jump_pin(pure_jump):
    # reach 1.0 by tilting unit jumps: constant psi = 2 - tol is optimal
    grid = make_time_grid(1.0, 200)
    event = EventSpec.pin([1.0], tol=1e-3)
    res = ldp_rate(pure_jump, grid, event, OptimizerConfig(seed=0))
    assert res.feasible
    assert res.value == pytest.approx(ell(1.999), abs=1e-4)
    assert abs(res.value - ell(2.0)) < 1e-3


def test_mdp_rate_exact_pin_two_grids(example11):
    # closed form: inf (1/2) int phi^2 with m(1) = 1 gives 1 / (e^2 - 1)
    target = 1.0 / (np.e**2 - 1.0)
    vals = {}
    for n in (400, 800):
        res = mdp_rate(example11, make_time_grid(1.0, n), EventSpec.pin([1.0]))
        assert res.feasible
        vals[n] = res.value
        assert res.value == pytest.approx(target, abs=1e-6)
        assert res.skeleton.terminal[0] == pytest.approx(1.0, abs=1e-9)
    assert abs(vals[400] - vals[800]) < 1e-6


def test_mdp_rate_halfspace_matches_pin_in_1d(example11):
    grid = make_time_grid(1.0, 300)
    c = 0.7
    by_pin = mdp_rate(example11, grid, EventSpec.pin([c]))
    by_half = mdp_rate(example11, grid, EventSpec.halfspace([1.0], c))
    assert by_half.value == pytest.approx(by_pin.value, rel=1e-9)
    # level below zero is free: the null control already satisfies it
    free = mdp_rate(example11, grid, EventSpec.halfspace([1.0], -0.1))
    assert free.value == 0.0 and free.feasible


def test_mdp_rate_pin_tol_shrinks_value(example11):
    grid = make_time_grid(1.0, 300)
    exact = mdp_rate(example11, grid, EventSpec.pin([1.0]))
    loose = mdp_rate(example11, grid, EventSpec.pin([1.0], tol=0.1))
    assert loose.value < exact.value
    assert loose.skeleton.terminal[0] == pytest.approx(0.9, abs=1e-6)


def test_mdp_rate_unreachable_is_infinite():
    dead = ModelSpec(
        name="dead",
        dim=1,
        initial=np.array([0.0]),
        drift=lambda t, x, law: np.zeros_like(x),
        diffusion=lambda t, x, law: np.zeros((1, 1)),
    )
    res = mdp_rate(dead, make_time_grid(1.0, 50), EventSpec.pin([1.0]))
    assert res.value == np.inf
    assert not res.feasible


def test_mdp_rate_rejects_path_events(example11):
    grid = make_time_grid(1.0, 50)
    ref = Path(grid, np.zeros((51, 1)), kind="linear")
    with pytest.raises(UnsupportedError):
        mdp_rate(example11, grid, EventSpec.pin_path(ref, tol=0.1))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mdp_skeleton_is_linear_in_the_control(logistic, seed):
    grid = make_time_grid(1.0, 40)
    rng = np.random.default_rng(seed)
    u = MdpControl(grid, rng.standard_normal((40, 1)), rng.standard_normal((40, 1)))
    v = MdpControl(grid, rng.standard_normal((40, 1)), rng.standard_normal((40, 1)))
    al, be = rng.uniform(-2, 2, size=2)
    mix = MdpControl(grid, al * u.phi + be * v.phi, al * u.tilt + be * v.tilt)
    lhs = solve_mdp_skeleton(logistic, grid, mix).values
    rhs = (
        al * solve_mdp_skeleton(logistic, grid, u).values
        + be * solve_mdp_skeleton(logistic, grid, v).values
    )
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_rate_result_to_dict_is_json_shaped(example11):
    grid = make_time_grid(1.0, 100)
    res = mdp_rate(example11, grid, EventSpec.pin([0.5]))
    d = res.to_dict()
    assert {"value", "residual", "feasible", "trace"} <= set(d)
