import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpcontrol import dynamics as dyn
from fpcontrol.dynamics import PlatformParams, PlatformState, resolve_thrust, shared_forces


def bits_of(*on):
    b = np.zeros(8, dtype=bool)
    b[list(on)] = True
    return b


def test_single_thruster_gets_full_newton(params):
    cmd = resolve_thrust(bits_of(0), params)
    np.testing.assert_array_equal(cmd.forces, [1.0, 0, 0, 0, 0, 0, 0, 0])


def test_two_thrusters_split_evenly(params):
    cmd = resolve_thrust(bits_of(0, 1), params)
    assert cmd.realized_force_per_thruster == 0.5
    assert cmd.forces.sum() == pytest.approx(1.0)


def test_no_thrusters_no_force(params):
    cmd = resolve_thrust(np.zeros(8, dtype=bool), params)
    assert cmd.realized_force_per_thruster == 0.0
    assert not cmd.forces.any()


def test_shared_forces_batched_matches_scalar(params):
    rng = np.random.default_rng(0)
    bits = rng.random((64, 8)) < 0.5
    batched = shared_forces(bits)
    for row, b in zip(batched, bits):
        np.testing.assert_array_equal(row, resolve_thrust(b, params).forces)


def test_positive_couple(params):
    # even rows spin counter-clockwise; a pair of them on opposite corners is a pure couple
    fx, fy, tz = dyn.body_wrench(resolve_thrust(bits_of(0, 4), params), params)
    assert fx == pytest.approx(0.0, abs=1e-12)
    assert fy == pytest.approx(0.0, abs=1e-12)
    assert tz == pytest.approx(0.3, abs=1e-12)


def test_all_thrusters_cancel(params):
    w = dyn.body_wrench(resolve_thrust(np.ones(8, dtype=bool), params), params)
    np.testing.assert_allclose(w, 0.0, atol=1e-12)


def test_force_through_center_has_no_torque():
    table = dyn.default_thruster_table().copy()
    table[0] = [0.0, 0.0, 1.0, 0.0]
    p = PlatformParams(thruster_table=table)
    w = dyn.body_wrench(resolve_thrust(bits_of(0), p), p)
    np.testing.assert_allclose(w, (1.0, 0.0, 0.0), atol=1e-12)


def test_pure_translation_achievable(params):
    # thrusters 0 and 5 push the same way on opposite corners
    fx, fy, tz = dyn.wrench_from_forces(shared_forces(bits_of(0, 5)), params)
    assert tz == pytest.approx(0.0, abs=1e-12)
    assert np.hypot(fx, fy) == pytest.approx(1.0)


def test_table_validation():
    bad = dyn.default_thruster_table().copy()
    bad[2, 2:] = [1.0, 1.0]
    with pytest.raises(ValueError, match="unit"):
        PlatformParams(thruster_table=bad)
    with pytest.raises(ValueError):
        PlatformParams(thruster_table=np.zeros((7, 4)))
    with pytest.raises(ValueError):
        PlatformParams(mass=0.0)


def test_default_inertia():
    assert PlatformParams().inertia == pytest.approx(0.2556, abs=1e-4)


def test_coasting_is_exact(params):
    s = PlatformState(x=1.0, y=-2.0, theta=0.3, vx=0.1, vy=-0.05, omega=0.2)
    off = resolve_thrust(np.zeros(8, dtype=bool), params)
    n = dyn.step(s, off, params=params)
    assert n.x == pytest.approx(1.0 + 0.1 * 0.2, abs=1e-15)
    assert n.y == pytest.approx(-2.0 - 0.05 * 0.2, abs=1e-15)
    assert (n.vx, n.vy, n.omega) == (0.1, -0.05, 0.2)
    assert n.t == 1


def test_constant_force_step(params):
    # 1 N along world +x from rest
    n = dyn.step(PlatformState(), resolve_thrust(np.zeros(8, dtype=bool), params), (1.0, 0.0, 0.0), params)
    assert n.vx == pytest.approx(0.2 / 5.32, abs=1e-12)
    assert n.x == pytest.approx(0.2 * 0.2 / 5.32, abs=1e-12)
    assert round(n.vx, 4) == 0.0376
    assert round(n.x, 5) == 0.00752


def test_couple_step(params):
    n = dyn.step(PlatformState(), resolve_thrust(bits_of(0, 4), params), params=params)
    assert n.omega == pytest.approx(0.3 * 0.2 / params.inertia, rel=1e-12)
    assert round(n.omega, 4) == 0.2347


def test_body_force_rotates_with_heading(params):
    s = np.array([0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0])
    out = dyn.integrate(s, (1.0, 0.0, 0.0), (0.0, 0.0, 0.0), params)
    assert out[dyn.VX] == pytest.approx(0.0, abs=1e-15)
    assert out[dyn.VY] == pytest.approx(0.2 / 5.32)


def test_rejects_non_finite(params):
    off = resolve_thrust(np.zeros(8, dtype=bool), params)
    with pytest.raises(ValueError):
        dyn.step(PlatformState(vx=np.nan), off, params=params)
    with pytest.raises(ValueError):
        dyn.step(PlatformState(), off, (np.inf, 0, 0), params)


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (2 * np.pi - 0.2, -0.2), (-3 * np.pi, np.pi), (np.pi, np.pi)])
def test_wrap_angle(a, expected):
    assert dyn.wrap_angle(a) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range_and_congruence(a):
    w = dyn.wrap_angle(a)
    assert -np.pi < w <= np.pi
    k = (a - w) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-9


@settings(max_examples=50)
@given(st.lists(st.booleans(), min_size=8, max_size=8), st.floats(-np.pi, np.pi))
def test_thrust_budget(bits, theta):
    p = PlatformParams()
    w = dyn.wrench_from_forces(shared_forces(np.array(bits)), p)
    assert np.hypot(w[0], w[1]) <= 1.0 + 1e-12
    s = dyn.integrate(np.array([0, 0, theta, 0, 0, 0.0]), w, (0, 0, 0), p)
    assert -np.pi < s[dyn.THETA] <= np.pi
    assert np.all(np.isfinite(s))


def test_momentum_conserved_without_inputs(params):
    s = np.array([0.1, 0.2, -1.0, 0.3, -0.4, 0.7])
    for _ in range(1000):
        s = dyn.integrate(s, (0, 0, 0), (0, 0, 0), params)
    assert (s[dyn.VX], s[dyn.VY], s[dyn.OMEGA]) == (0.3, -0.4, 0.7)


@settings(max_examples=30)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-2, 2))
def test_force_free_reversibility(vx, vy, w):
    p = PlatformParams()
    s0 = np.array([0.5, -0.5, 0.1, vx, vy, w])
    s = s0.copy()
    for _ in range(20):
        s = dyn.integrate(s, (0, 0, 0), (0, 0, 0), p)
    s[[dyn.VX, dyn.VY, dyn.OMEGA]] *= -1
    for _ in range(20):
        s = dyn.integrate(s, (0, 0, 0), (0, 0, 0), p)
    np.testing.assert_allclose(s[:2], s0[:2], atol=1e-9)
    assert abs(dyn.wrap_angle(s[dyn.THETA] - s0[dyn.THETA])) < 1e-9


def test_step_is_deterministic(params):
    s = PlatformState(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    cmd = resolve_thrust(bits_of(1, 2, 7), params)
    assert dyn.step(s, cmd, (0.1, 0.0, 0.01), params) == dyn.step(s, cmd, (0.1, 0.0, 0.01), params)
