"""Rigid-body 6-DoF dynamics, the violation-integral augmentation and time dilation.

State layout (``n_x = 13``, or 14 when augmented)::

    [ r_I (0:3) | v_I (3:6) | q_B2I (6:10) | w_B (10:13) | y (13) ]

Control layout (``n_u = 7``)::

    [ f_B (0:3) | M_B (3:6) | s (6) ]

``s`` is the time dilation ``dt/dtau``. Normalized-time dynamics are
``F(x, u) = s * [f_6dof(x, u); y_dot]`` with
``y_dot = sum_c max(0, g_c)^2`` over every continuously enforced path
constraint ``g_c <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from losguide import attitude
from losguide.los import Keypoint, ViewCone, dcm_batch, keypoint_position, los_batch

R, V, Q, W, Y = slice(0, 3), slice(3, 6), slice(6, 10), slice(10, 13), 13
F_B, M_B, S = slice(0, 3), slice(3, 6), 6
N_STATE, N_CONTROL = 13, 7


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.0
    inertia: tuple = ((0.03, 0.0, 0.0), (0.0, 0.03, 0.0), (0.0, 0.0, 0.06))
    gravity: tuple = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"vehicle mass must be positive, got {self.mass}")
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("inertia must be positive definite")

    @property
    def J(self) -> np.ndarray:
        return np.asarray(self.inertia, dtype=float)

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


def sixdof_derivative(t, x, u, p: VehicleParams) -> np.ndarray:
    """Physical-time derivative of the 13-element vehicle state."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q = x[Q]
    if abs(np.linalg.norm(q) - 1.0) > attitude.UNIT_TOL:
        raise attitude.InvalidQuaternion("state quaternion is not unit norm")
    return _f6dof(x[None, :N_STATE], u[None, :6], p.mass, p.J, np.linalg.inv(p.J), p.g)[0]


def _f6dof(x, u, m, J, Jinv, g):
    q = x[:, Q]
    w = x[:, W]
    # C(q)/|q|^2 is the rotation of q/|q|, so the vehicle cannot gain thrust by scaling q
    C = dcm_batch(q) / np.einsum("ki,ki->k", q, q)[:, None, None]
    dx = np.empty((len(x), N_STATE))
    dx[:, R] = x[:, V]
    dx[:, V] = np.einsum("kij,kj->ki", C, u[:, F_B]) / m + g
    wx, wy, wz = w.T
    qw, qx, qy, qz = q.T
    dx[:, 6] = 0.5 * (-wx * qx - wy * qy - wz * qz)
    dx[:, 7] = 0.5 * (wx * qw + wz * qy - wy * qz)
    dx[:, 8] = 0.5 * (wy * qw - wz * qx + wx * qz)
    dx[:, 9] = 0.5 * (wz * qw + wy * qx - wx * qy)
    Jw = w @ J.T
    dx[:, W] = (u[:, M_B] - np.cross(w, Jw)) @ Jinv.T
    return dx


def _f6dof_jac(x, u, m, J, Jinv):
    """Jacobians of ``f_6dof`` in state (K,13,13) and in ``[f_B, M_B]`` (K,13,6)."""
    K = len(x)
    q = x[:, Q]
    w = x[:, W]
    f = u[:, F_B]
    A = np.zeros((K, N_STATE, N_STATE))
    B = np.zeros((K, N_STATE, 6))
    A[:, 0, 3] = A[:, 1, 4] = A[:, 2, 5] = 1.0
    # dv/dq = d(C(q) f)/dq / m
    qw, qv = q[:, 0], q[:, 1:]
    cross = np.cross(qv, f)
    A[:, V, 6] = (2 * qw[:, None] * f + 2 * cross) / m
    qf = np.einsum("ki,ki->k", qv, f)
    eye = np.eye(3)
    dqv = (
        -2 * f[:, :, None] * qv[:, None, :]
        + 2 * qf[:, None, None] * eye
        + 2 * qv[:, :, None] * f[:, None, :]
        - 2 * qw[:, None, None] * _skew_batch(f)
    )
    A[:, V, 7:10] = dqv / m
    # chain rule through the 1/|q|^2 normalization
    n2 = np.einsum("ki,ki->k", q, q)
    C = dcm_batch(q)
    Cf = np.einsum("kij,kj->ki", C, f)
    A[:, V, 6:10] = A[:, V, 6:10] / n2[:, None, None] - 2 * Cf[:, :, None] * q[:, None, :] / (m * n2[:, None, None] ** 2)
    B[:, V, F_B] = C / (m * n2[:, None, None])
    # attitude kinematics
    A[:, Q, Q] = 0.5 * _omega_batch(w)
    A[:, Q, W] = 0.5 * _xi_batch(q)
    # Euler's equation
    Jw = w @ J.T
    dwdw = -_skew_batch(w) @ J + _skew_batch(Jw)
    A[:, W, W] = Jinv @ dwdw
    B[:, W, 3:6] = Jinv
    return A, B


def _skew_batch(v):
    K = len(v)
    S = np.zeros((K, 3, 3))
    S[:, 0, 1], S[:, 0, 2] = -v[:, 2], v[:, 1]
    S[:, 1, 0], S[:, 1, 2] = v[:, 2], -v[:, 0]
    S[:, 2, 0], S[:, 2, 1] = -v[:, 1], v[:, 0]
    return S


def _omega_batch(w):
    wx, wy, wz = w.T
    z = np.zeros_like(wx)
    return np.stack(
        [
            np.stack([z, -wx, -wy, -wz], -1),
            np.stack([wx, z, wz, -wy], -1),
            np.stack([wy, -wz, z, wx], -1),
            np.stack([wz, wy, -wx, z], -1),
        ],
        axis=1,
    )


def _xi_batch(q):
    qw, qx, qy, qz = q.T
    return np.stack(
        [
            np.stack([-qx, -qy, -qz], -1),
            np.stack([qw, -qz, qy], -1),
            np.stack([qz, qw, -qx], -1),
            np.stack([-qy, qx, qw], -1),
        ],
        axis=1,
    )


@dataclass
class SixDofDynamics:
    """Time-dilated vehicle dynamics with batched derivative and Jacobians.

    With ``augmented=True`` the state carries ``y`` and every path
    constraint (line of sight per keypoint, minimum range, finite state
    bounds) feeds ``y_dot``. With ``augmented=False`` the same constraints
    are still available through :meth:`path_constraints` for nodal
    linearization, minus the state bounds.

    Batched methods take ``x`` of shape (K, n_x), ``u`` of shape (K, 7) and
    physical times ``t`` of shape (K,).
    """

    vehicle: VehicleParams
    cone: ViewCone
    keypoints: tuple
    state_min: np.ndarray = None
    state_max: np.ndarray = None
    range_min: float | None = None
    augmented: bool = True
    n_u: int = field(default=N_CONTROL, init=False)
    time_index: int = field(default=S, init=False)

    def __post_init__(self):
        self.m = float(self.vehicle.mass)
        self.J = self.vehicle.J
        self.Jinv = np.linalg.inv(self.J)
        self.g = self.vehicle.g
        self.n_x = N_STATE + 1 if self.augmented else N_STATE
        lo = np.full(N_STATE, -np.inf) if self.state_min is None else np.asarray(self.state_min, float)
        hi = np.full(N_STATE, np.inf) if self.state_max is None else np.asarray(self.state_max, float)
        self._lo_idx = np.flatnonzero(np.isfinite(lo))
        self._hi_idx = np.flatnonzero(np.isfinite(hi))
        self._lo = lo[self._lo_idx]
        self._hi = hi[self._hi_idx]

    @classmethod
    def from_scenario(cls, sc, augmented: bool = True) -> "SixDofDynamics":
        return cls(
            vehicle=sc.vehicle,
            cone=sc.cone,
            keypoints=tuple(sc.keypoints),
            state_min=sc.state_min,
            state_max=sc.state_max,
            range_min=sc.range_min,
            augmented=augmented,
        )

    def kernel_args(self) -> tuple:
        if not hasattr(self, "_kernel_args"):
            from losguide._kernels import model_arrays

            self._kernel_args = model_arrays(self)
        return self._kernel_args

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoints)

    def keypoint_positions(self, t) -> np.ndarray:
        """(n_kp, K, 3) keypoint positions at times ``t``."""
        t = np.atleast_1d(t)
        return np.stack([keypoint_position(kp, t) for kp in self.keypoints])

    def los(self, x, t):
        """Per-keypoint LoS residuals (K, n_kp) and state gradients (K, n_kp, 13)."""
        x = np.atleast_2d(x)
        K, n = len(x), self.n_keypoints
        p = self.keypoint_positions(t).transpose(1, 0, 2).reshape(K * n, 3)
        g, dr, dq = los_batch(np.repeat(x[:, R], n, axis=0), np.repeat(x[:, Q], n, axis=0), p, self.cone)
        grad = np.zeros((K, n, N_STATE))
        grad[:, :, R] = dr.reshape(K, n, 3)
        grad[:, :, Q] = dq.reshape(K, n, 4)
        return g.reshape(K, n), grad

    def min_range(self, x, t):
        """``range_min - ||r - p||`` per keypoint with gradients, or empty arrays."""
        x = np.atleast_2d(x)
        K = len(x)
        if self.range_min is None:
            return np.empty((K, 0)), np.empty((K, 0, N_STATE))
        d = x[None, :, R] - self.keypoint_positions(t)  # (n_kp, K, 3)
        n = np.linalg.norm(d, axis=2)
        grad = np.zeros((K, self.n_keypoints, N_STATE))
        grad[:, :, R] = (-d / np.maximum(n, 1e-12)[..., None]).transpose(1, 0, 2)
        return (self.range_min - n).T, grad

    def box(self, x):
        x = np.atleast_2d(x)
        K = len(x)
        nlo, nhi = len(self._lo_idx), len(self._hi_idx)
        g = np.concatenate((self._lo - x[:, self._lo_idx], x[:, self._hi_idx] - self._hi), axis=1)
        grad = np.zeros((K, nlo + nhi, N_STATE))
        grad[:, np.arange(nlo), self._lo_idx] = -1.0
        grad[:, nlo + np.arange(nhi), self._hi_idx] = 1.0
        return g, grad

    def path_constraints(self, x, t, include_box: bool = True):
        """All continuously enforced constraints ``g <= 0`` stacked: (K, n_c), (K, n_c, 13)."""
        parts = [self.los(x, t), self.min_range(x, t)]
        if include_box:
            parts.append(self.box(x))
        g = np.concatenate([p[0] for p in parts], axis=1)
        grad = np.concatenate([p[1] for p in parts], axis=1)
        return g, grad

    def violation_rate(self, x, t):
        """``y_dot`` (K,) and its gradient in the vehicle state (K, 13)."""
        g, grad = self.path_constraints(x, t)
        pos = np.maximum(g, 0.0)
        return np.sum(pos**2, axis=1), np.einsum("kc,kci->ki", 2 * pos, grad)

    def physical_rate(self, x, u, t):
        """Physical-time derivative (K, n_x) before dilation."""
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        f = _f6dof(x[:, :N_STATE], u, self.m, self.J, self.Jinv, self.g)
        if not self.augmented:
            return f
        ydot, _ = self.violation_rate(x[:, :N_STATE], t)
        return np.column_stack((f, ydot))

    def derivative(self, x, u, t):
        u = np.atleast_2d(u)
        return u[:, S, None] * self.physical_rate(x, u, t)

    def linearize(self, x, u, t):
        """``F`` (K, n_x), ``dF/dx`` (K, n_x, n_x) and ``dF/du`` (K, n_x, 7) in one pass."""
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        K = len(x)
        s = u[:, S]
        f = np.empty((K, self.n_x))
        f[:, :N_STATE] = _f6dof(x[:, :N_STATE], u, self.m, self.J, self.Jinv, self.g)
        A6, B6 = _f6dof_jac(x[:, :N_STATE], u, self.m, self.J, self.Jinv)
        A = np.zeros((K, self.n_x, self.n_x))
        B = np.zeros((K, self.n_x, N_CONTROL))
        A[:, :N_STATE, :N_STATE] = A6
        B[:, :N_STATE, :6] = B6
        if self.augmented:
            f[:, Y], A[:, Y, :N_STATE] = self.violation_rate(x[:, :N_STATE], t)
        A *= s[:, None, None]
        B *= s[:, None, None]
        B[:, :, S] = f
        return s[:, None] * f, A, B

    def jacobians(self, x, u, t):
        """``dF/dx`` (K, n_x, n_x) and ``dF/du`` (K, n_x, 7)."""
        _, A, B = self.linearize(x, u, t)
        return A, B


def augmented_derivative(tau, x, u, dyn: SixDofDynamics, t: float = 0.0) -> np.ndarray:
    """Normalized-time derivative ``F(x, u)`` at one point.

    ``t`` is the physical time at ``tau``; it only matters for moving keypoints.
    """
    if not u[S] > 0:
        raise ValueError("time dilation must be positive")
    return dyn.derivative(np.asarray(x, float)[None], np.asarray(u, float)[None], np.array([t]))[0]


def dynamics_jacobians(tau, x, u, dyn: SixDofDynamics, t: float = 0.0):
    A, B = dyn.jacobians(np.asarray(x, float)[None], np.asarray(u, float)[None], np.array([t]))
    return A[0], B[0]


def hover_control(p: VehicleParams, s: float = 1.0) -> np.ndarray:
    """Thrust balancing gravity at identity attitude, zero moment, dilation ``s``."""
    u = np.zeros(N_CONTROL)
    u[F_B] = -p.mass * p.g
    u[S] = s
    return u
