import numpy as np
import pytest
from hypothesis import given
from scipy.integrate import solve_ivp
from scipy.spatial.transform import Rotation

from losguide import attitude
from tests.helpers import unit_quaternions, vectors


def rodrigues(axis, angle):
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def test_identity_quaternion_gives_identity():
    assert np.array_equal(attitude.quat_to_dcm(np.array([1.0, 0, 0, 0])), np.eye(3))


def test_half_turn_about_x_matches_axis_angle():
    expected = rodrigues((1, 0, 0), np.pi)
    assert np.allclose(expected, np.diag([1.0, -1.0, -1.0]), atol=1e-15)
    assert np.allclose(attitude.quat_to_dcm(np.array([0.0, 1, 0, 0])), expected, atol=1e-15)


def test_non_unit_quaternion_rejected():
    with pytest.raises(attitude.InvalidQuaternion):
        attitude.quat_to_dcm(np.array([1.0, 0.1, 0, 0]))
    # within the 1e-6 tolerance is accepted
    attitude.quat_to_dcm(np.array([1.0 + 5e-7, 0, 0, 0]))


@given(unit_quaternions())
def test_dcm_matches_scipy_active_rotation(q):
    ref = Rotation.from_quat(np.r_[q[1:], q[0]]).as_matrix()
    assert np.allclose(attitude.quat_to_dcm(q), ref, atol=1e-12)


@given(unit_quaternions())
def test_dcm_is_proper_orthogonal(q):
    C = attitude.quat_to_dcm(q)
    assert np.allclose(C.T @ C, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(C) - 1.0) < 1e-9


@given(unit_quaternions())
def test_double_cover(q):
    assert np.allclose(attitude.quat_to_dcm(q), attitude.quat_to_dcm(-q), atol=1e-15)


@given(unit_quaternions(), unit_quaternions())
def test_composition(q1, q2):
    lhs = attitude.quat_to_dcm(attitude.normalize(attitude.quat_mul(q1, q2)))
    assert np.allclose(lhs, attitude.quat_to_dcm(q1) @ attitude.quat_to_dcm(q2), atol=1e-9)


@given(vectors(4, 100.0).filter(lambda q: np.linalg.norm(q) > 1e-3))
def test_normalize_gives_unit_norm(q):
    assert abs(np.linalg.norm(attitude.normalize(q)) - 1.0) < 1e-9


def test_normalize_zero_raises():
    with pytest.raises(attitude.InvalidQuaternion):
        attitude.normalize(np.zeros(4))


def test_omega_of_zero_is_zero():
    assert np.array_equal(attitude.omega_matrix(np.zeros(3)), np.zeros((4, 4)))


@given(vectors())
def test_omega_is_skew_symmetric(w):
    O = attitude.omega_matrix(w)
    assert np.allclose(O + O.T, 0.0)


@given(unit_quaternions(), vectors())
def test_omega_and_xi_agree_with_quaternion_product(q, w):
    prod = attitude.quat_mul(q, np.r_[0.0, w])
    assert np.allclose(attitude.omega_matrix(w) @ q, prod, atol=1e-12)
    assert np.allclose(attitude.xi_matrix(q) @ w, prod, atol=1e-12)


@pytest.mark.parametrize("axis", [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, -2, 0.5)])
def test_single_axis_rotation_matches_closed_form(axis):
    # body rate about a fixed axis: q(t) = axis-angle(axis, |w| t), pins the sign convention
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    rate, T = 1.7, 2.3
    w = rate * axis
    sol = solve_ivp(lambda t, q: 0.5 * attitude.omega_matrix(w) @ q, (0, T), [1.0, 0, 0, 0], rtol=1e-12,
                    atol=1e-13)
    assert np.allclose(sol.y[:, -1], attitude.axis_angle_quat(axis, rate * T), atol=1e-8)


def test_skew_right_hand_rule():
    assert np.array_equal(attitude.skew(np.array([1.0, 0, 0])) @ np.array([0.0, 1, 0]), [0, 0, 1])


@given(vectors())
def test_skew_self_product_is_zero(xi):
    assert np.allclose(attitude.skew(xi) @ xi, 0.0, atol=1e-12)


@given(vectors(), vectors())
def test_skew_anticommutes(xi, a):
    assert np.allclose(attitude.skew(xi) @ a, -attitude.skew(a) @ xi, atol=1e-12)
    assert np.allclose(attitude.skew(xi) @ a, np.cross(xi, a), atol=1e-12)


@given(unit_quaternions(), vectors())
def test_rotation_jacobians_match_finite_differences(q, v):
    h = 1e-6
    for fun, jac in ((attitude.rotate, attitude.rotate_jac), (attitude.rotate_inv, attitude.rotate_inv_jac)):
        fd = np.column_stack([(fun(q + h * e, v) - fun(q - h * e, v)) / (2 * h) for e in np.eye(4)])
        assert np.allclose(jac(q, v), fd, atol=1e-6 * max(1.0, np.abs(fd).max()))
