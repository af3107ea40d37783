"""Compiled single-point dynamics for dense propagation.

Mirrors :class:`losguide.dynamics.SixDofDynamics` point by point; the numpy
implementation stays the reference and the tests compare the two.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _rhs(x, u, t, m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq, kp_phase,
         lo_idx, lo, hi_idx, hi, rmin, augmented):
    n = x.shape[0]
    dx = np.zeros(n)
    qw, qx, qy, qz = x[6], x[7], x[8], x[9]
    wx, wy, wz = x[10], x[11], x[12]
    C = np.empty((3, 3))
    C[0, 0] = qw * qw + qx * qx - qy * qy - qz * qz
    C[0, 1] = 2 * (qx * qy - qw * qz)
    C[0, 2] = 2 * (qx * qz + qw * qy)
    C[1, 0] = 2 * (qx * qy + qw * qz)
    C[1, 1] = qw * qw - qx * qx + qy * qy - qz * qz
    C[1, 2] = 2 * (qy * qz - qw * qx)
    C[2, 0] = 2 * (qx * qz - qw * qy)
    C[2, 1] = 2 * (qy * qz + qw * qx)
    C[2, 2] = qw * qw - qx * qx - qy * qy + qz * qz
    C /= qw * qw + qx * qx + qy * qy + qz * qz
    for i in range(3):
        dx[i] = x[3 + i]
        acc = 0.0
        for j in range(3):
            acc += C[i, j] * u[j]
        dx[3 + i] = acc / m + g[i]
    dx[6] = 0.5 * (-wx * qx - wy * qy - wz * qz)
    dx[7] = 0.5 * (wx * qw + wz * qy - wy * qz)
    dx[8] = 0.5 * (wy * qw - wz * qx + wx * qz)
    dx[9] = 0.5 * (wz * qw + wy * qx - wx * qy)
    Jw = J @ x[10:13]
    tq = np.empty(3)
    tq[0] = u[3] - (wy * Jw[2] - wz * Jw[1])
    tq[1] = u[4] - (wz * Jw[0] - wx * Jw[2])
    tq[2] = u[5] - (wx * Jw[1] - wy * Jw[0])
    wd = Jinv @ tq
    for i in range(3):
        dx[10 + i] = wd[i]
    if augmented:
        ydot = 0.0
        for k in range(kp_kind.shape[0]):
            p = np.empty(3)
            for i in range(3):
                if kp_kind[k] == 0:
                    p[i] = kp_a[k, i]
                else:
                    p[i] = kp_a[k, i] + kp_amp[k, i] * np.sin(kp_freq[k] * t + kp_phase[k])
            d = p - x[0:3]
            pB = C.T @ d
            pS = Rm.T @ pB
            a0 = pS[0] * kscale[0]
            a1 = pS[1] * kscale[1]
            if norm_inf:
                nrm = max(abs(a0), abs(a1))
            else:
                nrm = np.sqrt(a0 * a0 + a1 * a1)
            gl = nrm - pS[2]
            if gl > 0:
                ydot += gl * gl
            if not np.isnan(rmin):
                gr = rmin - np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
                if gr > 0:
                    ydot += gr * gr
        for i in range(lo_idx.shape[0]):
            v = lo[i] - x[lo_idx[i]]
            if v > 0:
                ydot += v * v
        for i in range(hi_idx.shape[0]):
            v = x[hi_idx[i]] - hi[i]
            if v > 0:
                ydot += v * v
        dx[13] = ydot
    return dx * u[6]


@njit(cache=True)
def _segment_control(tau, seg, tau_nodes, u_nodes, t_nodes, dtau):
    frac = (tau - tau_nodes[seg]) / dtau
    u = (1.0 - frac) * u_nodes[seg] + frac * u_nodes[seg + 1]
    s0 = u_nodes[seg, 6]
    s1 = u_nodes[seg + 1, 6]
    h = frac * dtau
    t = t_nodes[seg] + s0 * h + 0.5 * (s1 - s0) * frac * h
    return u, t


@njit(cache=True)
def propagate(x0, u_nodes, t_nodes, tau_nodes, dtau, taus, segs, sample_idx, n_dense,
              m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq, kp_phase,
              lo_idx, lo, hi_idx, hi, rmin, augmented):
    x = x0.copy()
    out = np.empty((n_dense, x.shape[0]))
    out[0] = x
    for i in range(taus.shape[0] - 1):
        a = taus[i]
        b = taus[i + 1]
        seg = segs[i]
        h = b - a
        u, t = _segment_control(a, seg, tau_nodes, u_nodes, t_nodes, dtau)
        k1 = _rhs(x, u, t, m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq, kp_phase,
                  lo_idx, lo, hi_idx, hi, rmin, augmented)
        u, t = _segment_control(a + h / 2, seg, tau_nodes, u_nodes, t_nodes, dtau)
        k2 = _rhs(x + h / 2 * k1, u, t, m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq,
                  kp_phase, lo_idx, lo, hi_idx, hi, rmin, augmented)
        k3 = _rhs(x + h / 2 * k2, u, t, m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq,
                  kp_phase, lo_idx, lo, hi_idx, hi, rmin, augmented)
        u, t = _segment_control(b, seg, tau_nodes, u_nodes, t_nodes, dtau)
        k4 = _rhs(x + h * k3, u, t, m, J, Jinv, g, Rm, kscale, norm_inf, kp_kind, kp_a, kp_amp, kp_freq, kp_phase,
                  lo_idx, lo, hi_idx, hi, rmin, augmented)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        qn = np.sqrt(x[6] ** 2 + x[7] ** 2 + x[8] ** 2 + x[9] ** 2)
        for j in range(6, 10):
            x[j] /= qn
        if sample_idx[i + 1] >= 0:
            out[sample_idx[i + 1]] = x
    return out


def model_arrays(dyn):
    """Flatten a :class:`SixDofDynamics` into the kernel's argument tuple."""
    kps = dyn.keypoints
    kind = np.array([0 if kp.kind == "static" else 1 for kp in kps], dtype=np.int64)
    a = np.array([kp.position if kp.kind == "static" else kp.base for kp in kps], dtype=float).reshape(-1, 3)
    amp = np.array([kp.amplitude for kp in kps], dtype=float).reshape(-1, 3)
    freq = np.array([kp.frequency for kp in kps], dtype=float)
    phase = np.array([kp.phase for kp in kps], dtype=float)
    cone = dyn.cone
    kscale = np.array([1.0 / np.tan(cone.alpha), 1.0 / np.tan(cone.beta)])
    rmin = np.nan if dyn.range_min is None else float(dyn.range_min)
    return (
        float(dyn.m), dyn.J, dyn.Jinv, dyn.g, cone.mount_dcm, kscale, bool(np.isinf(cone.norm)),
        kind, a, amp, freq, phase,
        dyn._lo_idx.astype(np.int64), dyn._lo, dyn._hi_idx.astype(np.int64), dyn._hi, rmin, bool(dyn.augmented),
    )


def rhs(dyn, x, u, t):
    return _rhs(np.asarray(x, float), np.asarray(u, float), float(t), *model_arrays(dyn))
