"""Hypothesis strategies and small numerical oracles shared by the tests."""

import functools

import numpy as np
from hypothesis import strategies as st

# measured values behind each acceptance verdict, printed after the run
ACCEPTANCE_REPORT: list[str] = []


def unit_quaternions():
    return (
        st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=4, max_size=4)
        .map(np.array)
        .filter(lambda q: np.linalg.norm(q) > 0.1)
        .map(lambda q: q / np.linalg.norm(q))
    )


def vectors(n=3, bound=10.0):
    return st.lists(st.floats(-bound, bound, allow_nan=False), min_size=n, max_size=n).map(np.array)


def central_difference(fun, x, h=1e-6):
    """Jacobian of ``fun`` at ``x`` by central differences, columns per input."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def hover_scenario(nodes=5, objective="min-fuel", **kw):
    """Hover in place for a fixed time with a keypoint straight along the boresight.

    The straight-line initial reference is dynamics-feasible and optimal, so
    the solver has nothing to do.
    """
    from losguide.los import Keypoint, ViewCone
    from losguide.scenarios import Scenario

    x0 = (0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    inf = np.inf
    args = dict(
        name="hover",
        keypoints=(Keypoint(position=(0.0, 0.0, 7.0)),),
        x_init=x0,
        x_final=x0,
        objective=objective,
        cone=ViewCone(),
        t_final=2.0 if objective == "min-fuel" else None,
        t_guess=2.0,
        state_min=(-10.0, -10.0, 0.0) + (-5.0,) * 3 + (-inf,) * 4 + (-3.0,) * 3,
        state_max=(10.0, 10.0, 10.0) + (5.0,) * 3 + (inf,) * 4 + (3.0,) * 3,
        control_min=(-5.0, -5.0, 0.0, -1.0, -1.0, -1.0, 0.5),
        control_max=(5.0, 5.0, 20.0, 1.0, 1.0, 1.0, 5.0),
        nodes=nodes,
    )
    args.update(kw)
    return Scenario(**args)


@functools.lru_cache(maxsize=None)
def solved(scenario: str, method: str = "ct", eps_licq: float | None = None, nodes: int | None = None):
    """Session-cached solve of a default scenario; returns ``(sc, traj, log)``."""
    import dataclasses

    from losguide import SolveOptions, cinematography_default, relative_nav_default, solve

    sc = {"cinematography": cinematography_default, "relative-nav": relative_nav_default}[scenario]()
    if nodes is not None:
        sc = sc.with_nodes(nodes)
    if eps_licq is not None:
        sc = sc.with_weights(dataclasses.replace(sc.weights, eps_licq=eps_licq))
    traj, log = solve(sc, SolveOptions(method=method))
    return sc, traj, log


def dense_los(sc, traj, n_dense=1000):
    """Densely propagated trajectory and its per-keypoint LoS residuals."""
    from losguide.discretize import propagate_nonlinear
    from losguide.dynamics import SixDofDynamics

    dyn = SixDofDynamics.from_scenario(sc, augmented=False)
    dense = propagate_nonlinear(dyn, traj.x[0, :13], traj.u, traj.grid, n_dense=n_dense)
    g, _ = dyn.los(dense.x, dense.t)
    return dense, g
