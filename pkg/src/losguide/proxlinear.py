"""Prox-linear successive convexification loop.

Each iteration discretizes about the reference, solves the convex
subproblem of the chosen method and adopts its solution as the next
reference. The loop stops once the step, the virtual control and (for the
discrete-time baseline) the positive buffers all fall below tolerance.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from losguide import attitude
from losguide.config import Tolerances, Weights
from losguide.discretize import NumericalFailure, TimeGrid, discretize, node_times
from losguide.dynamics import F_B, N_STATE, Q, R, S, V, SixDofDynamics, hover_control
from losguide.subproblem import (
    CT,
    DT,
    Reference,
    build_ct_subproblem,
    build_dt_subproblem,
    build_scaling,
    ScalingMap,
    solve_subproblem,
)

log = logging.getLogger(__name__)

CONVERGED, MAX_ITER, FAILED = "converged", "max-iterations", "failed"
Y_DEFECT_FRACTION = 0.1


@dataclass(frozen=True)
class SolveOptions:
    method: str = CT
    tolerances: Tolerances | None = None  # None: take the scenario's
    weights: Weights | None = None  # None: take the scenario's
    n_sub: int = 15
    n_dense: int = 1000
    scaling: bool = True

    def __post_init__(self):
        if self.method not in (CT, DT):
            raise ValueError(f"method must be '{CT}' or '{DT}'")
        if self.n_sub < 1 or self.n_dense < 2:
            raise ValueError("n_sub must be >= 1 and n_dense >= 2")


@dataclass
class IterationRecord:
    k: int
    status: str
    trust_region: float
    vc_norm: float
    vb_norm: float
    objective: float
    wall_time: float


@dataclass
class SolveLog:
    method: str
    iterations: list = field(default_factory=list)
    converged: bool = False
    status: str = MAX_ITER
    runtime: float = 0.0
    message: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.n_iterations,
            "runtime_s": self.runtime,
            "message": self.message,
            "history": [vars(r) for r in self.iterations],
        }


@dataclass
class Trajectory:
    x: np.ndarray  # (N, n_x)
    u: np.ndarray  # (N, 7)
    grid: TimeGrid
    method: str

    @property
    def t(self) -> np.ndarray:
        return node_times(self.u, self.grid, S)


def initial_reference(sc, augmented: bool = True) -> Reference:
    """Straight-line guess through the gate centers, hovering at every node."""
    N = sc.nodes
    x0 = sc.x0
    xf = sc.xf
    anchors_k = [0]
    anchors_r = [x0[R]]
    for gate, node in zip(sc.gates, sc.gate_nodes(N)):
        anchors_k.append(node)
        anchors_r.append(np.asarray(gate.center, float))
    end = xf[R]
    if np.all(np.isfinite(end)):
        anchors_k.append(N - 1)
        anchors_r.append(end)
    anchors_r = np.array(anchors_r)
    k = np.arange(N)
    r = np.column_stack([np.interp(k, anchors_k, anchors_r[:, i]) for i in range(3)])

    s = sc.t_final if sc.t_final is not None else sc.t_guess
    dt = s / (N - 1)
    v = np.gradient(r, dt, axis=0) if N > 2 else np.repeat(((r[-1] - r[0]) / dt)[None], N, axis=0)

    x = np.zeros((N, N_STATE + 1 if augmented else N_STATE))
    x[:, R] = r
    x[:, V] = v
    x[:, Q] = (1.0, 0.0, 0.0, 0.0)
    x[0, V] = x0[V]
    x[0, Q] = x0[Q]
    u = np.tile(hover_control(sc.vehicle, s), (N, 1))
    u[0, F_B] = attitude.quat_to_dcm(x0[Q]).T @ u[0, F_B]
    return Reference(x, u)


def converged(trust_region, vc_norm, vb_norm, tol: Tolerances, method: str = CT) -> bool:
    """True when the loop should stop (the negation of the continue test)."""
    keep_going = trust_region > tol.eps_tr or vc_norm > tol.eps_vc
    if method == DT:
        keep_going = keep_going or vb_norm > tol.eps_vb
    return not keep_going


def defects_small(defect, tol: Tolerances, eps_licq: float | None = None) -> bool:
    """Nonlinear multiple-shooting gaps within tolerance.

    The 13 vehicle states must close to ``eps_defect``. When the violation
    integral is present its gap may not exceed ``Y_DEFECT_FRACTION`` of the
    LICQ allowance, so the nonlinear growth per interval stays within the
    cap up to that fraction.
    """
    ok = np.max(np.abs(defect[:, :N_STATE])) <= tol.eps_defect
    if eps_licq is not None and defect.shape[1] > N_STATE:
        y_tol = Y_DEFECT_FRACTION * eps_licq if eps_licq > 0 else tol.eps_defect
        ok = ok and np.max(np.abs(defect[:, N_STATE])) <= y_tol
    return bool(ok)


def solve(sc, opts: SolveOptions | None = None, reference: Reference | None = None):
    """Run the prox-linear loop; returns ``(Trajectory, SolveLog)``.

    A subproblem failure aborts with ``status = "failed"`` and the last
    accepted reference. Hitting ``k_max`` returns ``converged = False``.
    """
    opts = opts or SolveOptions()
    tol = opts.tolerances or sc.tolerances
    w = opts.weights or sc.weights
    augmented = opts.method == CT
    dyn = SixDofDynamics.from_scenario(sc, augmented=augmented)
    grid = TimeGrid(sc.nodes)
    metric = build_scaling(sc, augmented, w.eps_licq)
    scl = metric if opts.scaling else ScalingMap.identity(dyn.n_x, dyn.n_u)
    ref = reference or initial_reference(sc, augmented)
    if ref.x.shape[1] != dyn.n_x:
        raise ValueError("reference state dimension does not match the method")
    build = build_ct_subproblem if augmented else build_dt_subproblem
    out = SolveLog(method=opts.method)
    t_start = time.perf_counter()
    disc = None
    for k in range(1, tol.k_max + 1):
        t_iter = time.perf_counter()
        try:
            disc = disc or discretize(dyn, ref.x, ref.u, grid, n_sub=opts.n_sub)
        except NumericalFailure as exc:
            out.status, out.message = FAILED, f"discretization failed at iteration {k}: {exc}"
            break
        if augmented:
            prog = build(sc, ref, disc, w, scl, metric=metric)
        else:
            prog = build(sc, ref, disc, w, scl, dyn, metric=metric)
        sol = solve_subproblem(prog)
        rec = IterationRecord(k, sol.status, sol.trust_region, sol.vc_norm, sol.vb_norm if not augmented else 0.0,
                              sol.objective, time.perf_counter() - t_iter)
        out.iterations.append(rec)
        log.debug("iter %d %s tr=%.3e vc=%.3e vb=%.3e J=%.6g", k, sol.status, rec.trust_region, rec.vc_norm,
                  rec.vb_norm, rec.objective)
        if sol.x is None:
            out.status, out.message = FAILED, f"subproblem {sol.status} at iteration {k}"
            break
        x_next = sol.x.copy()
        # the model only sees q/|q|, so this projection does not move the trajectory
        x_next[:, Q] /= np.linalg.norm(x_next[:, Q], axis=1, keepdims=True)
        ref = Reference(x_next, sol.u)
        disc = None
        if converged(rec.trust_region, rec.vc_norm, rec.vb_norm, tol, opts.method):
            # G only sees the linear model; confirm on the nonlinear defects,
            # whose discretization the next iteration reuses
            try:
                disc = discretize(dyn, ref.x, ref.u, grid, n_sub=opts.n_sub)
            except NumericalFailure as exc:
                out.status, out.message = FAILED, f"discretization failed after iteration {k}: {exc}"
                break
            if defects_small(disc.defect, tol, w.eps_licq if augmented else None):
                out.converged, out.status = True, CONVERGED
                break
    out.runtime = time.perf_counter() - t_start
    return Trajectory(ref.x, ref.u, grid, opts.method), out
