"""Affine scaling and the two convex subproblems.

Both builders pose the problem in scaled variables ``x_hat = (x - offset) / scale``
and return a :class:`~losguide.conic.ConicProgram`. Dynamics rows use the
exact FOH discretization about the reference, linearized around the
nonlinear propagation from each reference node::

    x[k+1] = x_prop[k] + A_k (x[k] - xr[k]) + Bm_k (u[k] - ur[k]) + Bp_k (u[k+1] - ur[k+1]) + scale * nu[k]

The continuous-time variant carries the violation integral ``y`` in the
state and only bounds its per-interval growth; the discrete-time baseline
instead linearizes each nonconvex path constraint at every node with a
penalized buffer and enforces state bounds nodally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from losguide import conic
from losguide.config import Weights
from losguide.discretize import DiscretizationData, TimeGrid, node_times
from losguide.dynamics import N_STATE, Q, R, S, SixDofDynamics
from losguide.scenarios import gate_constraints

CT, DT = "ct", "dt"


@dataclass
class ScalingMap:
    """``value = scale * scaled + offset`` per state and control component."""

    x_scale: np.ndarray
    x_offset: np.ndarray
    u_scale: np.ndarray
    u_offset: np.ndarray
    x_frozen: np.ndarray
    u_frozen: np.ndarray
    objective: float = 1.0  # nominal cost magnitude the objective is divided by

    def scale_x(self, x):
        return (np.asarray(x) - self.x_offset) / self.x_scale

    def unscale_x(self, xh):
        return np.asarray(xh) * self.x_scale + self.x_offset

    def scale_u(self, u):
        return (np.asarray(u) - self.u_offset) / self.u_scale

    def unscale_u(self, uh):
        return np.asarray(uh) * self.u_scale + self.u_offset

    @classmethod
    def identity(cls, n_x: int, n_u: int) -> "ScalingMap":
        return cls(np.ones(n_x), np.zeros(n_x), np.ones(n_u), np.zeros(n_u),
                   np.zeros(n_x, bool), np.zeros(n_u, bool))


def _axis_scaling(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    scale = np.ones_like(lo)
    offset = np.zeros_like(lo)
    frozen = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    ok = np.isfinite(lo) & np.isfinite(hi) & (hi > lo)
    scale[ok] = 0.5 * (hi[ok] - lo[ok])
    offset[ok] = 0.5 * (hi[ok] + lo[ok])
    return scale, offset, frozen


def build_scaling(sc, augmented: bool = True, eps_licq: float | None = None) -> ScalingMap:
    """Map every finite ``[min, max]`` box onto ``[-1, 1]``.

    Unbounded components keep the identity map; components with
    ``min == max`` are frozen at that value and left unscaled. The violation
    integral ``y`` starts at zero and may grow by at most ``eps_licq`` per
    interval, so its box is ``[0, (N - 1) eps_licq]``. The objective is
    normalized by its hover value over the nominal horizon so the weights
    act on an O(1) cost.
    """
    if np.any(sc.x_lo > sc.x_hi) or np.any(sc.u_lo > sc.u_hi):
        raise ValueError("bounds must satisfy min <= max")
    xs, xo, xf = _axis_scaling(sc.x_lo, sc.x_hi)
    us, uo, uf = _axis_scaling(sc.u_lo, sc.u_hi)
    if augmented:
        eps = sc.weights.eps_licq if eps_licq is None else eps_licq
        half = 0.5 * (sc.nodes - 1) * eps if eps > 0 else 1.0
        xs, xo, xf = np.append(xs, half), np.append(xo, half if eps > 0 else 0.0), np.append(xf, False)
    horizon = sc.t_final if sc.t_final is not None else sc.t_guess
    nominal = horizon if sc.objective == "min-time" else horizon * sc.vehicle.mass * np.linalg.norm(sc.vehicle.g)
    return ScalingMap(xs, xo, us, uo, xf, uf, float(nominal))


@dataclass
class Reference:
    x: np.ndarray  # (N, n_x)
    u: np.ndarray  # (N, n_u)


@dataclass
class SubproblemSolution:
    status: str
    x: np.ndarray | None
    u: np.ndarray | None
    nu: np.ndarray | None  # (N-1, n_x), in the metric's scaled units
    buffer: np.ndarray | None  # (N, n_g) linearized constraint values (DT only)
    objective: float
    trust_region: float = np.nan  # squared scaled step
    vc_norm: float = np.nan
    vb_norm: float = np.nan
    solver_time: float = 0.0


class _Builder:
    """Variable allocation and COO row accumulation."""

    def __init__(self):
        self.n = 0
        self.eq = []  # (rows, cols, vals, rhs) groups
        self.ineq = []
        self.soc = []
        self.P_diag = []
        self.q_parts = []
        self.constant = 0.0
        self.row_counts = {}

    def var(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        return idx

    def _add(self, store, name, cols, vals, rhs):
        """Rows with dense coefficient blocks: ``cols``/``vals`` are (m, nnz_per_row)."""
        cols = np.asarray(cols).reshape(len(rhs), -1)
        vals = np.asarray(vals, dtype=float).reshape(len(rhs), -1)
        store.append((cols, vals, np.asarray(rhs, dtype=float)))
        self.row_counts[name] = self.row_counts.get(name, 0) + len(rhs)

    def add_eq(self, name, cols, vals, rhs):
        self._add(self.eq, name, cols, vals, rhs)

    def add_ineq(self, name, cols, vals, rhs):
        self._add(self.ineq, name, cols, vals, rhs)

    def _matrix(self, store):
        if not store:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        rows, cols, vals, rhs = [], [], [], []
        offset = 0
        for c, v, b in store:
            m = len(b)
            rows.append(np.repeat(np.arange(offset, offset + m), c.shape[1]))
            cols.append(c.ravel())
            vals.append(v.ravel())
            rhs.append(b)
            offset += m
        rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
        keep = vals != 0
        M = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(offset, self.n))
        return M, np.concatenate(rhs)

    def program(self, layout) -> conic.ConicProgram:
        A, b = self._matrix(self.eq)
        G, h = self._matrix(self.ineq)
        diag = np.zeros(self.n)
        q = np.zeros(self.n)
        for idx, d in self.P_diag:
            np.add.at(diag, idx.ravel(), np.broadcast_to(d, idx.shape).ravel())
        for idx, c in self.q_parts:
            np.add.at(q, idx.ravel(), np.broadcast_to(c, idx.shape).ravel())
        layout = dict(layout, rows=dict(self.row_counts))
        return conic.ConicProgram(self.n, sp.diags(diag, format="csc"), q, A, b, G, h, self.soc, layout, self.constant)


def _dense_rows(row_coeffs, var_idx):
    """Expand per-row coefficient blocks (K, n, m) over variable indices (K, m)."""
    K, n, m = row_coeffs.shape
    cols = np.broadcast_to(var_idx[:, None, :], (K, n, m))
    return cols.reshape(K * n, m), row_coeffs.reshape(K * n, m)


def _common(b: _Builder, sc, ref: Reference, disc: DiscretizationData, w: Weights, scl: ScalingMap, grid: TimeGrid,
            metric: ScalingMap):
    """Variables, objective and rows shared by both methods."""
    N = grid.nodes
    n_x, n_u = ref.x.shape[1], ref.u.shape[1]
    if disc.A.shape != (N - 1, n_x, n_x) or disc.B_minus.shape != (N - 1, n_x, n_u):
        raise ValueError("discretization does not match the reference dimensions")
    X = b.var((N, n_x))
    U = b.var((N, n_u))
    Vp = b.var((N - 1, n_x))
    Vm = b.var((N - 1, n_x))
    xr_h = scl.scale_x(ref.x)
    ur_h = scl.scale_u(ref.u)
    # penalties are measured in the metric's units whatever coordinates the
    # solver works in, so the coordinates change the iterates by a change of
    # variables only
    cx, cu = scl.x_scale / metric.x_scale, scl.u_scale / metric.u_scale

    # trust region
    lam = w.trust_region
    b.P_diag += [(X, 2 * lam * cx**2), (U, 2 * lam * cu**2)]
    b.q_parts += [(X, -2 * lam * cx**2 * xr_h), (U, -2 * lam * cu**2 * ur_h)]
    b.constant += lam * (np.sum((cx * xr_h) ** 2) + np.sum((cu * ur_h) ** 2))
    # l1 virtual control through its positive/negative parts
    b.q_parts += [(Vp, w.virtual_control * cx), (Vm, w.virtual_control * cx)]
    b.add_ineq("virtual_control_sign", np.concatenate((Vp, Vm)).reshape(-1, 1), -np.ones((2 * (N - 1) * n_x, 1)),
               np.zeros(2 * (N - 1) * n_x))

    # dynamics rows in scaled coordinates
    Dx, ox, Du, ou = scl.x_scale, scl.x_offset, scl.u_scale, scl.u_offset
    A_h = disc.A * Dx[None, None, :] / Dx[None, :, None]
    Bm_h = disc.B_minus * Du[None, None, :] / Dx[None, :, None]
    Bp_h = disc.B_plus * Du[None, None, :] / Dx[None, :, None]
    rhs = (
        disc.x_prop
        - ox
        + np.einsum("kij,kj->ki", disc.A, ox - ref.x[:-1])
        + np.einsum("kij,kj->ki", disc.B_minus, ou - ref.u[:-1])
        + np.einsum("kij,kj->ki", disc.B_plus, ou - ref.u[1:])
    ) / Dx
    # row equilibration: a grossly violating reference makes the y rows
    # many orders larger than the rest, dividing a row leaves its solutions alone
    row = np.maximum(1.0, np.maximum(np.abs(A_h).max(axis=2), np.abs(Bm_h).max(axis=2)))
    row = np.maximum(row, np.abs(Bp_h).max(axis=2))[:, :, None]
    A_h, Bm_h, Bp_h, rhs = A_h / row, Bm_h / row, Bp_h / row, rhs / row[:, :, 0]
    eye = np.eye(n_x)[None] / row
    blocks = [(X[1:], eye), (X[:-1], -A_h), (U[:-1], -Bm_h), (U[1:], -Bp_h), (Vp, -eye), (Vm, eye)]
    cols, vals = zip(*(_dense_rows(M, idx) for idx, M in blocks))
    b.add_eq("dynamics", np.hstack(cols), np.hstack(vals), rhs.ravel())

    # boundary conditions
    x0_h = scl.scale_x(_with_y(sc.x0, n_x))
    b.add_eq("boundary", X[0].reshape(-1, 1), np.ones((n_x, 1)), x0_h)
    xf = _with_y(sc.xf, n_x, fill=np.nan)
    pin = np.flatnonzero(np.isfinite(xf))
    if len(pin):
        b.add_eq("boundary", X[-1, pin].reshape(-1, 1), np.ones((len(pin), 1)), scl.scale_x(np.nan_to_num(xf))[pin])

    # nodal min-max bounds; the continuous-time method also integrates the
    # state box into y, the nodal rows keep each convex step inside the box
    _box_rows(b, "state_box", X[1:, :N_STATE], sc.x_lo, sc.x_hi, Dx[:N_STATE], ox[:N_STATE])
    _box_rows(b, "control_box", U, sc.u_lo, sc.u_hi, Du, ou)

    # gates at their assigned nodes
    for gate, node in zip(sc.gates, sc.gate_nodes(N)):
        G, h, E, e = gate_constraints(gate)
        r_idx = X[node, R]
        Dr, orr = Dx[R], ox[R]
        b.add_ineq("gates", np.tile(r_idx, (len(h), 1)), G * Dr, h - G @ orr)
        b.add_eq("gates", np.tile(r_idx, (len(e), 1)), E * Dr, e - E @ orr)

    # objective
    dtau = grid.dtau
    trap = np.full(N, dtau)
    trap[[0, -1]] *= 0.5
    w_obj = w.objective / metric.objective
    if sc.objective == "min-time":
        b.q_parts.append((U[:, S], w_obj * trap * Du[S]))
        b.constant += w_obj * np.sum(trap * ou[S])
        eta = None
    else:
        eta = b.var((N,))
        weight = trap * ref.u[:, S]
        b.q_parts.append((eta, w_obj * weight))
        for k in range(N):
            b.soc.append(("fuel", eta[k], U[k, :6], Du[:6], ou[:6]))

    # maximum range as second-order cones at the nodes
    if sc.range_max is not None:
        t_nodes = node_times(ref.u, grid, S)
        for kp_pos in _keypoint_positions(sc, t_nodes):
            for k in range(N):
                b.soc.append(("range", None, X[k, R], Dx[R], ox[R] - kp_pos[k], sc.range_max))
    return X, U, Vp, Vm, eta


def _with_y(x, n_x, fill=0.0):
    x = np.asarray(x, dtype=float)
    return x if len(x) == n_x else np.append(x, fill)


def _keypoint_positions(sc, t):
    from losguide.los import keypoint_position

    return [keypoint_position(kp, t) for kp in sc.keypoints]


def _box_rows(b: _Builder, name, V, lo, hi, D, o):
    """``lo <= D * v_hat + o <= hi`` on every row of ``V`` for finite bounds."""
    N = len(V)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    frozen = np.isfinite(lo) & (lo == hi)
    upper = np.flatnonzero(np.isfinite(hi) & ~frozen)
    lower = np.flatnonzero(np.isfinite(lo) & ~frozen)
    fz = np.flatnonzero(frozen)
    if len(upper):
        b.add_ineq(name, V[:, upper].reshape(-1, 1), np.tile(D[upper], N)[:, None], np.tile(hi[upper] - o[upper], N))
    if len(lower):
        b.add_ineq(name, V[:, lower].reshape(-1, 1), np.tile(-D[lower], N)[:, None], np.tile(o[lower] - lo[lower], N))
    if len(fz):
        b.add_eq(name, V[:, fz].reshape(-1, 1), np.tile(D[fz], N)[:, None], np.tile(lo[fz] - o[fz], N))


def _finish_soc(b: _Builder):
    """Turn symbolic cone records into sparse blocks once ``b.n`` is final."""
    out = []
    for rec in b.soc:
        if rec[0] == "fuel":
            _, eta_k, u_idx, D, o = rec
            m = len(u_idx)
            rows = np.arange(m + 1)
            G = sp.csr_matrix(
                (np.concatenate(([-1.0], -D)), (rows, np.concatenate(([eta_k], u_idx)))), shape=(m + 1, b.n)
            )
            h = np.concatenate(([0.0], o))
        else:
            _, _, r_idx, D, o, radius = rec
            G = sp.csr_matrix((-D, (np.arange(1, 4), r_idx)), shape=(4, b.n))
            h = np.concatenate(([radius], o))
        out.append((G, h))
    b.soc = out
    b.row_counts["soc"] = len(out)


def build_ct_subproblem(sc, ref: Reference, disc: DiscretizationData, w: Weights, scl: ScalingMap,
                        metric: ScalingMap | None = None) -> conic.ConicProgram:
    """Continuous-time LoS subproblem over the augmented state ``[x; y]``.

    ``scl`` sets the solver's coordinates and ``metric`` (default ``scl``)
    the units of the trust-region and virtual-control penalties.
    """
    grid = TimeGrid(sc.nodes)
    if ref.x.shape[1] != N_STATE + 1:
        raise ValueError("the continuous-time subproblem needs the augmented state")
    b = _Builder()
    metric = metric or scl
    X, U, Vp, Vm, eta = _common(b, sc, ref, disc, w, scl, grid, metric)
    # per-interval growth of the violation integral
    Dy = scl.x_scale[N_STATE]
    cols = np.stack((X[1:, N_STATE], X[:-1, N_STATE]), axis=1)
    vals = np.tile([Dy, -Dy], (sc.nodes - 1, 1))
    b.add_ineq("licq", cols, vals, np.full(sc.nodes - 1, w.eps_licq))
    _finish_soc(b)
    return b.program({"method": CT, "X": X, "U": U, "Vp": Vp, "Vm": Vm, "eta": eta, "scaling": scl, "metric": metric,
                      "ref": ref})


def linearized_path_constraints(sc, dyn: SixDofDynamics, ref: Reference):
    """Nodal values and state gradients of the nonconvex path constraints (N, n_g), (N, n_g, 13)."""
    t_nodes = node_times(ref.u, TimeGrid(sc.nodes), S)
    return dyn.path_constraints(ref.x[:, :N_STATE], t_nodes, include_box=False)


def build_dt_subproblem(sc, ref: Reference, disc: DiscretizationData, w: Weights, scl: ScalingMap,
                        dyn: SixDofDynamics | None = None, metric: ScalingMap | None = None) -> conic.ConicProgram:
    """Discrete-time baseline: nodal linearized LoS/range with max(0, .) buffers."""
    grid = TimeGrid(sc.nodes)
    N = sc.nodes
    b = _Builder()
    metric = metric or scl
    X, U, Vp, Vm, eta = _common(b, sc, ref, disc, w, scl, grid, metric)
    Dx, ox = scl.x_scale[:N_STATE], scl.x_offset[:N_STATE]
    dyn = dyn or SixDofDynamics.from_scenario(sc, augmented=False)
    g, grad = linearized_path_constraints(sc, dyn, ref)
    n_g = g.shape[1]
    nodes = np.arange(1, N)
    Nb = b.var((N, n_g))
    E = b.var((N, n_g))
    # g(xr) + grad (x - xr) - nu = 0  with x = D x_hat + o
    coef = grad[nodes] * Dx[None, None, :]  # (N-1, n_g, 13)
    rhs = -g[nodes] + np.einsum("kcj,kj->kc", grad[nodes], ref.x[nodes, :N_STATE] - ox)
    cols = np.broadcast_to(X[nodes, None, :N_STATE], coef.shape).reshape(-1, N_STATE)
    cols = np.hstack((cols, Nb[nodes].reshape(-1, 1)))
    vals = np.hstack((coef.reshape(-1, N_STATE), -np.ones(((N - 1) * n_g, 1))))
    b.add_eq("path_linearized", cols, vals, rhs.ravel())
    # the node-0 buffers are fixed at zero since x[0] is pinned
    b.add_eq("path_linearized", Nb[0].reshape(-1, 1), np.ones((n_g, 1)), np.zeros(n_g))
    # epigraph of max(0, nu)
    b.add_ineq("buffer_epigraph", np.stack((Nb.ravel(), E.ravel()), 1), np.tile([1.0, -1.0], (N * n_g, 1)),
               np.zeros(N * n_g))
    b.add_ineq("buffer_epigraph", E.reshape(-1, 1), -np.ones((N * n_g, 1)), np.zeros(N * n_g))
    b.q_parts.append((E, w.virtual_buffer))
    _finish_soc(b)
    return b.program({"method": DT, "X": X, "U": U, "Vp": Vp, "Vm": Vm, "eta": eta, "buffer": Nb, "epi": E,
                      "scaling": scl, "metric": metric, "ref": ref})


def unpack(p: conic.ConicProgram, sol: conic.ConicSolution) -> SubproblemSolution:
    if sol.status not in conic.SOLVED:
        return SubproblemSolution(sol.status, None, None, None, None, np.nan, solver_time=sol.solve_time)
    L = p.layout
    z = sol.z
    scl, met, ref = L["scaling"], L.get("metric", L["scaling"]), L["ref"]
    x, u = scl.unscale_x(z[L["X"]]), scl.unscale_u(z[L["U"]])
    nu = (z[L["Vp"]] - z[L["Vm"]]) * scl.x_scale / met.x_scale
    trust = float(np.sum(((x - ref.x) / met.x_scale) ** 2) + np.sum(((u - ref.u) / met.u_scale) ** 2))
    buffer = z[L["buffer"]] if "buffer" in L else None
    vb = float(np.sum(np.maximum(buffer, 0.0))) if buffer is not None else 0.0
    return SubproblemSolution(
        status=sol.status,
        x=x,
        u=u,
        nu=nu,
        buffer=buffer,
        objective=sol.objective,
        trust_region=trust,
        vc_norm=float(np.sum(np.abs(nu))),
        vb_norm=vb,
        solver_time=sol.solve_time,
    )


def solve_subproblem(p: conic.ConicProgram, tol: float = 1e-8) -> SubproblemSolution:
    return unpack(p, conic.solve_conic(p, tol=tol))
