"""View-cone geometry and the line-of-sight residual.

A keypoint is visible when ``||A_C p_S||_rho <= c^T p_S`` with ``c = e_z``
in the sensor frame. The residual ``g = ||A_C p_S||_rho - p_S[2]`` is
nonpositive exactly on the cone.

Frame convention: ``quat_to_dcm(q_B2I)`` maps body vectors to inertial and
``quat_to_dcm(q_S2B)`` maps sensor vectors to body, so an inertial offset
``d = p_I - r_I`` is resolved in the sensor frame as
``C(q_S2B)^T C(q_B2I)^T d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from losguide import attitude

BORESIGHT = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ViewCone:
    """Rectangular (``norm=inf``) or elliptical (``norm=2``) sensor footprint.

    ``alpha`` and ``beta`` are the half-angles (rad) along the sensor x and y
    axes; ``mount`` is the sensor-to-body quaternion.
    """

    alpha: float = np.deg2rad(45.0)
    beta: float = np.deg2rad(45.0)
    norm: float = 2.0
    mount: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("alpha", "beta"):
            a = getattr(self, name)
            if not 0.0 < a < np.pi / 2:
                raise ValueError(f"cone half-angle {name}={a} must lie in (0, pi/2)")
        if self.norm not in (2.0, np.inf):
            raise ValueError(f"cone norm must be 2 or inf, got {self.norm}")
        q = np.asarray(self.mount, dtype=float)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > attitude.UNIT_TOL:
            raise ValueError("cone mount must be a unit quaternion [w, x, y, z]")

    @property
    def shape_matrix(self) -> np.ndarray:
        return np.diag([1.0 / np.tan(self.alpha), 1.0 / np.tan(self.beta), 0.0])

    @property
    def mount_dcm(self) -> np.ndarray:
        return attitude.quat_to_dcm(np.asarray(self.mount, dtype=float))


@dataclass(frozen=True)
class Keypoint:
    """A point that must stay in view.

    ``kind="static"`` uses ``position``; ``kind="sinusoid"`` follows
    ``base + amplitude * sin(frequency * t + phase)`` componentwise.
    """

    kind: str = "static"
    position: tuple = (0.0, 0.0, 0.0)
    base: tuple = (0.0, 0.0, 0.0)
    amplitude: tuple = (0.0, 0.0, 0.0)
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("static", "sinusoid"):
            raise ValueError(f"unknown keypoint kind {self.kind!r}")


def keypoint_position(kp: Keypoint, t):
    """Inertial keypoint position at time(s) ``t``; shape ``(3,)`` or ``(len(t), 3)``."""
    t = np.asarray(t, dtype=float)
    if kp.kind == "static":
        p = np.asarray(kp.position, dtype=float)
        return np.broadcast_to(p, t.shape + (3,)).copy()
    base = np.asarray(kp.base, dtype=float)
    amp = np.asarray(kp.amplitude, dtype=float)
    return base + amp * np.sin(kp.frequency * t + kp.phase)[..., None]


def keypoint_in_sensor_frame(p_I, r_I, q_B2I, q_S2B) -> np.ndarray:
    for q in (q_B2I, q_S2B):
        if abs(np.linalg.norm(q) - 1.0) > attitude.UNIT_TOL:
            raise attitude.InvalidQuaternion("attitude quaternions must be unit norm")
    d = np.asarray(p_I, dtype=float) - np.asarray(r_I, dtype=float)
    return attitude.quat_to_dcm(q_S2B).T @ attitude.quat_to_dcm(q_B2I).T @ d


def los_residual(p_S, cone: ViewCone):
    """``||A_C p_S||_rho - p_S[2]``; vectorized over leading axes of ``p_S``."""
    p_S = np.asarray(p_S, dtype=float)
    a = p_S[..., :2] * np.array([1.0 / np.tan(cone.alpha), 1.0 / np.tan(cone.beta)])
    return np.linalg.norm(a, ord=cone.norm, axis=-1) - p_S[..., 2]


def los_residual_grad_ps(p_S, cone: ViewCone) -> np.ndarray:
    """Gradient of :func:`los_residual` in ``p_S``.

    Uses the first maximizing coordinate at inf-norm ties and the zero
    subgradient at the cone apex.
    """
    p_S = np.atleast_2d(np.asarray(p_S, dtype=float))
    k = np.array([1.0 / np.tan(cone.alpha), 1.0 / np.tan(cone.beta)])
    a = p_S[:, :2] * k
    grad = np.zeros_like(p_S)
    if cone.norm == 2.0:
        n = np.linalg.norm(a, axis=1)
        safe = n > 0
        grad[safe, :2] = a[safe] * k / n[safe, None]
    else:
        i = np.argmax(np.abs(a), axis=1)
        rows = np.arange(len(a))
        grad[rows, i] = np.sign(a[rows, i]) * k[i]
    grad[:, 2] = -1.0
    return grad


def los_batch(r, q, p, cone: ViewCone):
    """Residual and its position/attitude gradients for a batch of states.

    Parameters
    ----------
    r : (K, 3) vehicle positions.
    q : (K, 4) body-to-inertial quaternions (not required to be unit).
    p : (K, 3) keypoint positions.

    Returns
    -------
    g : (K,)
    dg_dr : (K, 3)
    dg_dq : (K, 4)
    """
    r = np.atleast_2d(r)
    q = np.atleast_2d(q)
    d = np.atleast_2d(p) - r
    w = q[:, 0]
    qv = q[:, 1:]
    n2 = np.einsum("ki,ki->k", q, q)
    C = dcm_batch(q)
    p_B = np.einsum("kji,kj->ki", C, d) / n2[:, None]
    R = cone.mount_dcm
    p_S = p_B @ R  # R^T p_B, row-wise
    g = los_residual(p_S, cone)
    dg_dpS = los_residual_grad_ps(p_S, cone)
    dg_dpB = dg_dpS @ R.T
    dg_dr = -np.einsum("ki,kji->kj", dg_dpB, C) / n2[:, None]
    # d(C^T d)/dq, contracted with dg_dpB
    cross = np.cross(qv, d)
    qd = np.einsum("ki,ki->k", qv, d)
    dw = 2 * w[:, None] * d - 2 * cross
    gw = np.einsum("ki,ki->k", dg_dpB, dw)
    # rows of dqv: -2 d qv^T + 2 (qv.d) I + 2 qv d^T + 2 w [d x]
    h = dg_dpB
    gv = (
        -2 * np.einsum("ki,ki->k", h, d)[:, None] * qv
        + 2 * qd[:, None] * h
        + 2 * np.einsum("ki,ki->k", h, qv)[:, None] * d
        + 2 * w[:, None] * np.cross(h, d)
    )
    # p_B = C(q)^T d / |q|^2
    hp = np.einsum("ki,ki->k", h, p_B)
    dg_dq = np.column_stack((gw, gv)) / n2[:, None] - 2 * hp[:, None] * q / n2[:, None]
    return g, dg_dr, dg_dq


def los_residual_full(x, t: float, kp: Keypoint, cone: ViewCone):
    """Residual for one vehicle state ``x = [r, v, q, w, ...]`` and its gradient in ``x``."""
    x = np.asarray(x, dtype=float)
    p = keypoint_position(kp, t)
    g, dr, dq = los_batch(x[None, 0:3], x[None, 6:10], p[None], cone)
    grad = np.zeros_like(x)
    grad[0:3] = dr[0]
    grad[6:10] = dq[0]
    return float(g[0]), grad


def dcm_batch(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q.T
    C = np.empty((len(q), 3, 3))
    C[:, 0, 0] = w * w + x * x - y * y - z * z
    C[:, 0, 1] = 2 * (x * y - w * z)
    C[:, 0, 2] = 2 * (x * z + w * y)
    C[:, 1, 0] = 2 * (x * y + w * z)
    C[:, 1, 1] = w * w - x * x + y * y - z * z
    C[:, 1, 2] = 2 * (y * z - w * x)
    C[:, 2, 0] = 2 * (x * z - w * y)
    C[:, 2, 1] = 2 * (y * z + w * x)
    C[:, 2, 2] = w * w - x * x - y * y + z * z
    return C

