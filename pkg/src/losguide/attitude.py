"""Quaternion and rotation kernels.

Convention: scalar-first Hamilton quaternions ``q = [w, x, y, z]``. For a
quaternion ``q_B2I`` describing the attitude of frame B relative to frame I,
``quat_to_dcm(q_B2I)`` maps B-frame vectors into the I frame, and body-rate
kinematics are ``q_dot = 0.5 * omega_matrix(w_B) @ q``.

All functions accept non-unit quaternions where it makes sense (the optimizer
treats ``q`` as four free reals); ``quat_to_dcm`` is the homogeneous quadratic
form, so it is exact on the unit sphere and smooth off it.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-6


class InvalidQuaternion(ValueError):
    pass


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise InvalidQuaternion("cannot normalize a zero quaternion")
    return q / n


def quat_mul(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product ``q ⊗ p``."""
    qw, qv = q[0], np.asarray(q[1:])
    pw, pv = p[0], np.asarray(p[1:])
    return np.concatenate(([qw * pw - qv @ pv], qw * pv + pw * qv + np.cross(qv, pv)))


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate(([np.cos(angle / 2)], np.sin(angle / 2) * axis))


def skew(xi: np.ndarray) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = xi
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def omega_matrix(w: np.ndarray) -> np.ndarray:
    """4x4 matrix with ``omega_matrix(w) @ q == q ⊗ [0, w]``."""
    wx, wy, wz = w
    return np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )


def xi_matrix(q: np.ndarray) -> np.ndarray:
    """4x3 matrix with ``xi_matrix(q) @ w == omega_matrix(w) @ q``."""
    qw, qx, qy, qz = q
    return np.array(
        [
            [-qx, -qy, -qz],
            [qw, -qz, qy],
            [qz, qw, -qx],
            [-qy, qx, qw],
        ]
    )


def quat_to_dcm(q: np.ndarray, check: bool = True) -> np.ndarray:
    """Direction cosine matrix of ``q``.

    Raises
    ------
    InvalidQuaternion
        If ``check`` is set and ``|q|`` differs from 1 by more than 1e-6.
    """
    q = np.asarray(q, dtype=float)
    if check and abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise InvalidQuaternion(f"quaternion norm {np.linalg.norm(q):.3g} is not 1")
    w, x, y, z = q
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``quat_to_dcm(q) @ v`` without the unit-norm check."""
    return quat_to_dcm(q, check=False) @ v


def rotate_jac(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jacobian of ``quat_to_dcm(q) @ v`` with respect to ``q`` (3x4)."""
    w, qv = q[0], np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    dw = 2 * w * v + 2 * np.cross(qv, v)
    dqv = -2 * np.outer(v, qv) + 2 * (qv @ v) * np.eye(3) + 2 * np.outer(qv, v) - 2 * w * skew(v)
    return np.column_stack((dw, dqv))


def rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``quat_to_dcm(q).T @ v`` without the unit-norm check."""
    return quat_to_dcm(q, check=False).T @ v


def rotate_inv_jac(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jacobian of ``quat_to_dcm(q).T @ v`` with respect to ``q`` (3x4)."""
    w, qv = q[0], np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    dw = 2 * w * v - 2 * np.cross(qv, v)
    dqv = -2 * np.outer(v, qv) + 2 * (qv @ v) * np.eye(3) + 2 * np.outer(qv, v) + 2 * w * skew(v)
    return np.column_stack((dw, dqv))
