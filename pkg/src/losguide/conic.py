"""Solver-facing conic program and a Clarabel backend.

A :class:`ConicProgram` is

    minimize    0.5 z'Pz + q'z
    subject to  A_eq z  = b_eq
                G z    <= h
                h_i - G_i z in SOC   (first entry bounds the norm of the rest)

Any solver accepting quadratic objectives, linear rows and second-order
cones can consume it; :func:`solve_conic` uses Clarabel directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"
SOLVED = (OPTIMAL, NEAR_OPTIMAL)


@dataclass
class ConicProgram:
    n: int
    P: sp.spmatrix
    q: np.ndarray
    A_eq: sp.spmatrix
    b_eq: np.ndarray
    G: sp.spmatrix
    h: np.ndarray
    soc: list = field(default_factory=list)  # [(G_i, h_i)]
    layout: dict = field(default_factory=dict)
    constant: float = 0.0
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        n = self.n
        checks = [
            (self.P.shape == (n, n), "P"),
            (self.q.shape == (n,), "q"),
            (self.A_eq.shape == (len(self.b_eq), n), "A_eq/b_eq"),
            (self.G.shape == (len(self.h), n), "G/h"),
        ]
        checks += [(Gi.shape == (len(hi), n) and len(hi) >= 1, f"soc[{i}]") for i, (Gi, hi) in enumerate(self.soc)]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise ValueError(f"inconsistent conic program dimensions: {', '.join(bad)}")

    @property
    def n_eq(self) -> int:
        return len(self.b_eq)

    @property
    def n_ineq(self) -> int:
        return len(self.h)

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.P @ z) + self.q @ z + self.constant)

    def residuals(self, z: np.ndarray) -> dict:
        """Largest equality, inequality and cone violations at ``z``."""
        out = {
            "eq": float(np.max(np.abs(self.A_eq @ z - self.b_eq), initial=0.0)),
            "ineq": float(np.max(self.G @ z - self.h, initial=0.0)),
        }
        cone = 0.0
        for Gi, hi in self.soc:
            s = hi - Gi @ z
            cone = max(cone, float(np.linalg.norm(s[1:]) - s[0]))
        out["soc"] = max(cone, 0.0)
        return out


@dataclass
class ConicSolution:
    status: str
    z: np.ndarray | None
    objective: float
    iterations: int = 0
    solve_time: float = 0.0


_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": NEAR_OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "DualInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "AlmostDualInfeasible": INFEASIBLE,
}


def solve_conic(p: ConicProgram, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    """Solve with Clarabel; solver failures come back as a status, never an exception."""
    blocks = [p.A_eq, p.G] + [Gi for Gi, _ in p.soc]
    A = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, p.n))
    b = np.concatenate([p.b_eq, p.h] + [hi for _, hi in p.soc])
    cones = []
    if p.n_eq:
        cones.append(clarabel.ZeroConeT(p.n_eq))
    if p.n_ineq:
        cones.append(clarabel.NonnegativeConeT(p.n_ineq))
    cones += [clarabel.SecondOrderConeT(len(hi)) for _, hi in p.soc]
    P = sp.triu(p.P, format="csc")
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    try:
        solver = clarabel.DefaultSolver(P, np.asarray(p.q, float), A, b, cones, settings)
        sol = solver.solve()
    except Exception:  # noqa: BLE001 - any backend failure is reported as a status
        return ConicSolution(NUMERICAL_FAILURE, None, np.nan)
    status = _STATUS.get(str(sol.status), NUMERICAL_FAILURE)
    z = np.asarray(sol.x, dtype=float)
    if status in SOLVED and not np.all(np.isfinite(z)):
        status = NUMERICAL_FAILURE
    obj = p.objective(z) if status in SOLVED else np.nan
    return ConicSolution(status, z if status in SOLVED else None, obj, int(sol.iterations), float(sol.solve_time))
