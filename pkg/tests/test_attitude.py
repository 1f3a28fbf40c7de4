import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpattitude.attitude import (
    AttitudeState,
    DivergenceError,
    PlantTruth,
    SinusoidalDisturbance,
    conjugate,
    euler_zyx_to_quat,
    nominal_dynamics,
    quat_error,
    quat_product,
    rotation_matrix,
    step,
    target_torque,
    true_uncertainty,
)

J0 = np.diag([600.0, 450.0, 600.0])
IDENT = np.array([1.0, 0.0, 0.0, 0.0])

unit_quats = (
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4)
    .map(np.array)
    .filter(lambda v: np.linalg.norm(v) > 1e-3)
    .map(lambda v: v / np.linalg.norm(v))
)
vec3 = st.lists(st.floats(-0.2, 0.2, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_identity_is_neutral():
    Q = np.array([0.5, 0.5, -0.5, 0.5])
    np.testing.assert_allclose(quat_product(IDENT, Q), Q)


def test_two_quarter_turns_about_x():
    h = np.array([np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0, 0.0])
    np.testing.assert_allclose(quat_product(h, h), [0.0, 1.0, 0.0, 0.0], atol=1e-15)


def test_product_rejects_non_unit_and_non_finite():
    with pytest.raises(ValueError):
        quat_product([2.0, 0, 0, 0], IDENT)
    with pytest.raises(ValueError):
        quat_product([np.nan, 0, 0, 0], IDENT)


@given(unit_quats)
def test_conjugate_is_inverse(Q):
    np.testing.assert_allclose(quat_product(Q, conjugate(Q)), IDENT, atol=1e-12)


def test_error_of_equal_attitudes_is_identity():
    Q = euler_zyx_to_quat([15, 5, -20])
    np.testing.assert_allclose(quat_error(Q, Q), IDENT, atol=1e-15)


def test_error_boundary_half_turn():
    # [0,1,0,0]* (x) [1,0,0,0] = [0,-1,0,0]; q_e0 = 0 sits on the sign boundary
    Qe = quat_error([0.0, 1.0, 0.0, 0.0], IDENT)
    np.testing.assert_allclose(np.abs(Qe), [0.0, 1.0, 0.0, 0.0], atol=1e-15)
    assert Qe[0] >= 0


@given(unit_quats, unit_quats)
def test_error_scalar_part_nonnegative_and_recovers_attitude(Qd, Q):
    Qe = quat_error(Qd, Q)
    assert Qe[0] >= 0
    back = quat_product(Qd, Qe)
    assert min(np.abs(back - Q).max(), np.abs(back + Q).max()) < 1e-12


def test_rotation_matrix_examples():
    np.testing.assert_allclose(rotation_matrix(IDENT), np.eye(3))
    np.testing.assert_allclose(rotation_matrix([0.0, 1.0, 0.0, 0.0]), np.diag([1.0, -1.0, -1.0]))


@given(unit_quats)
def test_rotation_matrix_is_proper_orthogonal(Q):
    C = rotation_matrix(Q)
    np.testing.assert_allclose(C.T @ C, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(C) - 1.0) < 1e-9


def test_euler_yaw_only():
    Q = euler_zyx_to_quat([0.0, 0.0, 90.0])
    np.testing.assert_allclose(Q, [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)], atol=1e-15)


def test_nominal_dynamics_equilibrium_and_gyroscopic_term():
    x0 = AttitudeState(IDENT, np.zeros(3))
    np.testing.assert_array_equal(nominal_dynamics(x0, np.zeros(3), J0), np.zeros(6))
    # J0 w = [6, 9, -6]; w x J0 w = [-0.03, 0, -0.03]
    x = AttitudeState(IDENT, [0.01, 0.02, -0.01])
    out = nominal_dynamics(x, np.zeros(3), J0)
    np.testing.assert_allclose(out[3:], [0.03 / 600, 0.0, 0.03 / 600], rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(out[:3], 0.5 * np.array([0.01, 0.02, -0.01]))


def test_nominal_dynamics_rejects_singular_inertia():
    with pytest.raises(ValueError):
        nominal_dynamics(AttitudeState(IDENT, np.zeros(3)), np.zeros(3), np.diag([1.0, 1.0, 0.0]))


def test_uncertainty_vanishes_without_model_error():
    plant = PlantTruth(J0)
    x = AttitudeState(euler_zyx_to_quat([10, 20, 30]), [0.1, -0.2, 0.05])
    np.testing.assert_array_equal(true_uncertainty(x, [1.0, 2.0, 3.0], 7.0, plant), np.zeros(3))


def test_uncertainty_is_scaled_disturbance_when_inertia_exact():
    plant = PlantTruth(J0, tau_d=SinusoidalDisturbance())
    t = 3.7
    tau = np.array([0.5 * np.sin(0.1 * t), -np.sin(0.15 * t), 1.5 * np.sin(-0.15 * t + 1.5)])
    x = AttitudeState(IDENT, [0.01, 0.0, 0.0])
    np.testing.assert_allclose(true_uncertainty(x, np.ones(3), t, plant), np.linalg.solve(J0, tau), rtol=1e-12)


def test_uncertainty_zero_at_rest_without_torque():
    plant = PlantTruth(J0, J_tilde=np.diag([50.0, -30.0, 80.0]))
    x = AttitudeState(euler_zyx_to_quat([5, 5, 5]), np.zeros(3))
    np.testing.assert_array_equal(true_uncertainty(x, np.zeros(3), 0.0, plant), np.zeros(3))


@given(vec3, vec3, st.floats(0, 100))
@settings(max_examples=30)
def test_plant_matches_true_inertia_at_rest(u, tau, t):
    # with omega = 0 nominal + uncertainty is exactly (J_c0 + J_tilde)^-1 (u + tau)
    Jt = np.array([[40.0, 3.0, 0.0], [3.0, -60.0, 5.0], [0.0, 5.0, 120.0]])
    plant = PlantTruth(J0, J_tilde=Jt, tau_d=lambda _t: tau)
    x = AttitudeState(IDENT, np.zeros(3))
    lhs = nominal_dynamics(x, u, J0)[3:] + true_uncertainty(x, u, t, plant)
    np.testing.assert_allclose(lhs, np.linalg.solve(J0 + Jt, u + tau), rtol=1e-10, atol=1e-15)


def test_target_gains_from_table_values():
    Jt = np.diag([36.8, 37.5, 36.8])
    np.testing.assert_allclose(0.02 * Jt, np.diag([0.736, 0.75, 0.736]))
    np.testing.assert_allclose(0.05 * Jt, np.diag([1.84, 1.875, 1.84]))


def test_target_torque_examples():
    plant = PlantTruth(J0, K_pt=np.eye(3), K_dt=np.eye(3), target_active=True)
    np.testing.assert_array_equal(target_torque(IDENT, np.zeros(3), plant), np.zeros(3))
    Q = np.array([np.sqrt(1 - 0.01), 0.1, 0.0, 0.0])
    np.testing.assert_allclose(target_torque(Q, np.zeros(3), plant), [-0.1, 0.0, 0.0], atol=1e-15)


def test_plant_rejects_bad_inertia():
    with pytest.raises(ValueError):
        PlantTruth(np.array([[600.0, 1.0, 0.0], [0.0, 450.0, 0.0], [0.0, 0.0, 600.0]]))
    with pytest.raises(ValueError):
        PlantTruth(J0, J_tilde=-J0)
    with pytest.raises(ValueError):
        PlantTruth(J0, lambda_c=500.0)


def test_step_at_rest_is_stationary():
    plant = PlantTruth(J0)
    x = AttitudeState(euler_zyx_to_quat([1, 2, 3]), np.zeros(3))
    y = step(x, np.zeros(3), 0.0, 0.1, plant)
    np.testing.assert_allclose(y.quat, x.quat, atol=1e-15)
    np.testing.assert_array_equal(y.omega, np.zeros(3))


def test_free_rotation_conserves_inertial_momentum():
    plant = PlantTruth(J0)
    x = AttitudeState(euler_zyx_to_quat([15, 5, -20]), [0.01, 0.02, -0.01])
    h0 = rotation_matrix(x.quat).T @ J0 @ x.omega
    drift = 0.0
    for k in range(1000):
        y = step(x, np.zeros(3), 0.1 * k, 0.1, plant)
        assert abs(np.linalg.norm(y.quat) - 1.0) < 1e-9
        x = y
        h = rotation_matrix(x.quat).T @ J0 @ x.omega
        drift = max(drift, np.linalg.norm(h - h0) / np.linalg.norm(h0))
    assert drift < 1e-6


def test_substep_halving_converges():
    plant = PlantTruth(J0, J_tilde=np.diag([40.0, 200.0, 150.0]), tau_d=SinusoidalDisturbance())
    x10 = x20 = AttitudeState(euler_zyx_to_quat([15, 5, -20]), [0.05, -0.04, 0.03])
    for k in range(100):
        u = np.array([0.3, -0.2, 0.1])
        x10 = step(x10, u, 0.1 * k, 0.1, plant, substeps=10)
        x20 = step(x20, u, 0.1 * k, 0.1, plant, substeps=20)
    assert np.abs(np.concatenate([x10.quat - x20.quat, x10.omega - x20.omega])).max() < 1e-8


def test_divergence_is_reported_with_time():
    plant = PlantTruth(J0)
    x = AttitudeState(IDENT, [1e5, 0.0, 0.0])
    with pytest.raises(DivergenceError) as info:
        step(x, [1e12, 1e12, 0.0], 4.0, 0.1, plant)
    assert 4.0 < info.value.t <= 4.1 + 1e-12


def test_step_rejects_nonpositive_period():
    with pytest.raises(ValueError):
        step(AttitudeState(IDENT, np.zeros(3)), np.zeros(3), 0.0, 0.0, PlantTruth(J0))


def test_state_arrays_are_read_only():
    x = AttitudeState(IDENT, np.zeros(3))
    with pytest.raises(ValueError):
        x.omega[0] = 1.0
