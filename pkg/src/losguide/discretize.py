"""First-order-hold exact discretization and dense nonlinear propagation.

``dynamics`` objects follow a small protocol: attributes ``n_x``, ``n_u`` and
``time_index`` (control column holding the dilation ``dt/dtau``, or None for
``t = tau``), plus batched ``derivative(x, u, t)`` and
``linearize(x, u, t) -> (F, dF/dx, dF/du)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from losguide import _kernels


class NumericalFailure(RuntimeError):
    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (index {index})")
        self.index = index


@dataclass(frozen=True)
class TimeGrid:
    nodes: int

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("a time grid needs at least two nodes")

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nodes)

    @property
    def dtau(self) -> float:
        return 1.0 / (self.nodes - 1)


@dataclass
class DiscretizationData:
    """Per-interval linear maps; leading axis is the interval index."""

    A: np.ndarray  # (N-1, n_x, n_x)
    B_minus: np.ndarray  # (N-1, n_x, n_u)
    B_plus: np.ndarray  # (N-1, n_x, n_u)
    x_prop: np.ndarray  # (N-1, n_x) nonlinear endpoint from each reference node
    defect: np.ndarray  # (N-1, n_x) x_prop[k] - x_ref[k+1]


def foh_interp(u_k, u_k1, tau, tau_k, tau_k1):
    if not tau_k <= tau <= tau_k1 or tau_k1 <= tau_k:
        raise ValueError(f"tau={tau} outside interval [{tau_k}, {tau_k1}]")
    sig_plus = (tau - tau_k) / (tau_k1 - tau_k)
    return (1.0 - sig_plus) * np.asarray(u_k) + sig_plus * np.asarray(u_k1)


def node_times(u: np.ndarray, grid: TimeGrid, time_index, t0: float = 0.0) -> np.ndarray:
    """Physical time at each node, exact for a piecewise-linear dilation."""
    if time_index is None:
        return t0 + grid.tau
    s = u[:, time_index]
    return t0 + np.concatenate(([0.0], np.cumsum(0.5 * (s[:-1] + s[1:]) * grid.dtau)))


def _elapsed(s0, s1, dtau, frac):
    """Physical time elapsed a fraction ``frac`` into an interval with FOH dilation."""
    h = frac * dtau
    return s0 * h + 0.5 * (s1 - s0) * frac * h


def discretize(
    dynamics, x_ref, u_ref, grid: TimeGrid, n_sub: int = 15, t0: float = 0.0, quat_slice=slice(6, 10)
) -> DiscretizationData:
    """Discretize the dynamics linearized about ``(x_ref, u_ref)`` on every interval.

    All intervals are integrated together: the nonlinear state, the STM
    ``Phi`` and the two input integrals ``P-``/``P+`` obey

        x' = F(x, u(tau)),  Phi' = A Phi,  P±' = A P± + B sigma±

    from ``x_ref[k]``, ``I`` and ``0``; at the interval end
    ``Phi = A_bar``, ``P± = B_bar±``. No matrix inverse is formed.

    The exact flow keeps the quaternion norm, RK4 does not quite; the
    propagated quaternion is rescaled to the norm it started the interval
    with (pass ``quat_slice=None`` to skip).
    """
    x_ref = np.asarray(x_ref, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    K = grid.nodes - 1
    n, m = dynamics.n_x, dynamics.n_u
    if x_ref.shape != (grid.nodes, n) or u_ref.shape != (grid.nodes, m):
        raise ValueError(f"reference shapes {x_ref.shape}, {u_ref.shape} do not match grid of {grid.nodes} nodes")
    ti = dynamics.time_index
    if ti is not None and np.any(u_ref[:, ti] <= 0):
        raise ValueError("time dilation must be strictly positive")
    dtau = grid.dtau
    u0, u1 = u_ref[:-1], u_ref[1:]
    tk = node_times(u_ref, grid, ti, t0)[:-1]
    if ti is None:
        s0 = s1 = np.ones(K)
    else:
        s0, s1 = u0[:, ti], u1[:, ti]

    def rhs(frac, x, Phi, Pm, Pp):
        sp = frac
        u = (1.0 - sp) * u0 + sp * u1
        t = tk + _elapsed(s0, s1, dtau, frac)
        dx, A, B = dynamics.linearize(x, u, t)
        dPhi = A @ Phi
        dPm = A @ Pm + B * (1.0 - sp)
        dPp = A @ Pp + B * sp
        return dx * dtau, dPhi * dtau, dPm * dtau, dPp * dtau

    x = x_ref[:-1].copy()
    Phi = np.broadcast_to(np.eye(n), (K, n, n)).copy()
    Pm = np.zeros((K, n, m))
    Pp = np.zeros((K, n, m))
    h = 1.0 / n_sub
    for i in range(n_sub):
        f0 = i * h
        k1 = rhs(f0, x, Phi, Pm, Pp)
        k2 = rhs(f0 + h / 2, *_axpy((x, Phi, Pm, Pp), k1, h / 2))
        k3 = rhs(f0 + h / 2, *_axpy((x, Phi, Pm, Pp), k2, h / 2))
        k4 = rhs(f0 + h, *_axpy((x, Phi, Pm, Pp), k3, h))
        x, Phi, Pm, Pp = (
            y + h / 6 * (a + 2 * b + 2 * c + d) for y, a, b, c, d in zip((x, Phi, Pm, Pp), k1, k2, k3, k4)
        )
    bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(Phi).all(axis=(1, 2)))
    if bad.any():
        raise NumericalFailure("non-finite values during discretization", int(np.flatnonzero(bad)[0]))
    if quat_slice is not None and n >= quat_slice.stop:
        q0 = np.linalg.norm(x_ref[:-1, quat_slice], axis=1)
        x[:, quat_slice] *= (q0 / np.linalg.norm(x[:, quat_slice], axis=1))[:, None]
    return DiscretizationData(A=Phi, B_minus=Pm, B_plus=Pp, x_prop=x, defect=x - x_ref[1:])


def _axpy(ys, ks, a):
    return tuple(y + a * k for y, k in zip(ys, ks))


@dataclass
class DenseTrajectory:
    tau: np.ndarray  # (n,)
    t: np.ndarray  # (n,) physical time
    x: np.ndarray  # (n, n_x)
    u: np.ndarray  # (n, n_u)


def propagate_nonlinear(
    dynamics, x0, u_nodes, grid: TimeGrid, n_dense: int = 1000, t0: float = 0.0, quat_slice=slice(6, 10)
) -> DenseTrajectory:
    """Single-shooting RK4 propagation under FOH controls.

    Samples are emitted at ``n_dense`` uniformly spaced ``tau``. Grid nodes
    are step breakpoints so the FOH kinks are resolved, and no step is
    longer than the smaller of the node and sample spacings. The
    quaternion block is renormalized after every step.
    """
    u_nodes = np.asarray(u_nodes, dtype=float)
    if len(u_nodes) != grid.nodes:
        raise ValueError("control sequence length does not match the grid")
    ti = dynamics.time_index
    tau_s = np.linspace(0.0, 1.0, n_dense)
    max_step = min(grid.dtau, 1.0 / max(n_dense - 1, 1))
    breaks = np.unique(np.round(np.concatenate((tau_s, grid.tau)), 13))
    steps = [breaks[:1]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, int(np.ceil((b - a) / max_step - 1e-9)))
        steps.append(np.linspace(a, b, n + 1)[1:])
    taus = np.concatenate(steps)
    t_nodes = node_times(u_nodes, grid, ti, t0)
    segs = np.minimum((0.5 * (taus[:-1] + taus[1:]) / grid.dtau).astype(int), grid.nodes - 2)
    sample_idx = np.full(len(taus), -1, dtype=np.int64)
    sample_idx[np.searchsorted(taus, np.round(tau_s, 13))] = np.arange(n_dense)

    def control_time(tau, seg):
        frac = (tau - grid.tau[seg]) / grid.dtau
        u = (1.0 - frac) * u_nodes[seg] + frac * u_nodes[seg + 1]
        if ti is None:
            return u, t0 + tau
        return u, t_nodes[seg] + _elapsed(u_nodes[seg, ti], u_nodes[seg + 1, ti], grid.dtau, frac)

    def f(tau, x, seg):
        u, t = control_time(tau, seg)
        return dynamics.derivative(x[None], u[None], np.array([t]))[0]

    samples = [control_time(tau, min(int(tau / grid.dtau), grid.nodes - 2)) for tau in tau_s]
    out_u = np.array([u for u, _ in samples])
    out_t = np.array([t for _, t in samples])
    x = np.asarray(x0, dtype=float).copy()
    if hasattr(dynamics, "kernel_args") and ti is not None:
        out_x = _kernels.propagate(
            x, u_nodes, t_nodes, grid.tau, grid.dtau, taus, segs, sample_idx, n_dense, *dynamics.kernel_args()
        )
        bad = ~np.isfinite(out_x).all(axis=1)
        if bad.any():
            raise NumericalFailure("non-finite state during propagation", int(np.flatnonzero(bad)[0]))
        return DenseTrajectory(tau=tau_s, t=out_t, x=out_x, u=out_u)

    out_x = np.empty((n_dense, len(x)))
    out_x[0] = x
    for i, (a, b) in enumerate(zip(taus[:-1], taus[1:])):
        seg, h = segs[i], b - a
        k1 = f(a, x, seg)
        k2 = f(a + h / 2, x + h / 2 * k1, seg)
        k3 = f(a + h / 2, x + h / 2 * k2, seg)
        k4 = f(b, x + h * k3, seg)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if quat_slice is not None and len(x) >= quat_slice.stop:
            x[quat_slice] /= np.linalg.norm(x[quat_slice])
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("non-finite state during propagation", i + 1)
        if sample_idx[i + 1] >= 0:
            out_x[sample_idx[i + 1]] = x
    return DenseTrajectory(tau=tau_s, t=out_t, x=out_x, u=out_u)
