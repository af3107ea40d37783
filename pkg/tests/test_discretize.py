import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from losguide import attitude, initial_reference
from losguide.discretize import NumericalFailure, TimeGrid, discretize, foh_interp, node_times, propagate_nonlinear
from losguide.dynamics import S, SixDofDynamics, hover_control


class ScalarLTI:
    """x' = a x + b u in plain time (no dilation column)."""

    n_x, n_u, time_index = 1, 1, None

    def __init__(self, a, b):
        self.a, self.b = a, b

    def derivative(self, x, u, t):
        return self.a * x + self.b * u

    def linearize(self, x, u, t):
        K = len(x)
        return self.derivative(x, u, t), np.full((K, 1, 1), self.a), np.full((K, 1, 1), self.b)


class Broken(ScalarLTI):
    def linearize(self, x, u, t):
        F, A, B = super().linearize(x, u, t)
        return F * np.nan, A, B

    def derivative(self, x, u, t):
        return x * np.nan


# --- first-order hold -------------------------------------------------------

def test_foh_endpoints_and_midpoint():
    a, b = np.array([1.0, 2.0]), np.array([3.0, -2.0])
    assert np.array_equal(foh_interp(a, b, 0.2, 0.2, 0.4), a)
    assert np.allclose(foh_interp(a, b, 0.3, 0.2, 0.4), (a + b) / 2)


@given(st.floats(0.0, 1.0))
def test_foh_constant_hold(tau):
    u = np.array([0.5, -1.5, 7.0])
    assert np.allclose(foh_interp(u, u, tau, 0.0, 1.0), u)


@pytest.mark.parametrize("tau", [-0.01, 1.01])
def test_foh_outside_interval(tau):
    with pytest.raises(ValueError):
        foh_interp(np.zeros(2), np.ones(2), tau, 0.0, 1.0)


def test_grid_is_uniform_on_unit_interval():
    g = TimeGrid(7)
    assert g.tau[0] == 0.0 and g.tau[-1] == 1.0
    assert np.allclose(np.diff(g.tau), g.dtau)
    with pytest.raises(ValueError):
        TimeGrid(1)


# --- one-step maps ----------------------------------------------------------

def test_zero_dynamics_give_identity_maps():
    grid = TimeGrid(4)
    d = discretize(ScalarLTI(0.0, 0.0), np.full((4, 1), 2.0), np.ones((4, 1)), grid)
    assert np.array_equal(d.A, np.ones((3, 1, 1)))
    assert np.array_equal(d.B_minus, np.zeros((3, 1, 1)))
    assert np.array_equal(d.B_plus, np.zeros((3, 1, 1)))
    assert np.array_equal(d.defect, np.zeros((3, 1)))


@pytest.mark.parametrize("a, b, nodes, n_sub", [(-0.7, 1.3, 11, 15), (0.5, -2.0, 5, 15), (-0.7, 1.3, 2, 60)])
def test_scalar_lti_matches_matrix_exponential(a, b, nodes, n_sub):
    grid = TimeGrid(nodes)
    h = grid.dtau
    u = np.full((nodes, 1), 0.8)
    d = discretize(ScalarLTI(a, b), np.zeros((nodes, 1)), u, grid, n_sub=n_sub)
    assert np.max(np.abs(d.A[:, 0, 0] - np.exp(a * h))) <= 1e-9
    total = d.B_minus[:, 0, 0] + d.B_plus[:, 0, 0]
    assert np.max(np.abs(total - (np.exp(a * h) - 1.0) * b / a)) <= 1e-8


def test_scalar_lti_hold_split():
    # B- = int_0^h e^{a(h-t)} b (1 - t/h) dt, closed form
    a, b, grid = -0.9, 1.7, TimeGrid(6)
    h = grid.dtau
    d = discretize(ScalarLTI(a, b), np.zeros((6, 1)), np.zeros((6, 1)), grid)
    e = np.exp(a * h)
    bp = b * (e - 1.0 - a * h) / (a * a * h)
    bm = b * (e - 1.0) / a - bp
    assert np.allclose(d.B_plus[:, 0, 0], bp, atol=1e-10)
    assert np.allclose(d.B_minus[:, 0, 0], bm, atol=1e-10)


def _rk4_dense(rhs, y0, steps):
    y, h = y0, 1.0 / steps
    for i in range(steps):
        f = i * h
        k1 = rhs(f, y)
        k2 = rhs(f + h / 2, y + h / 2 * k1)
        k3 = rhs(f + h / 2, y + h / 2 * k2)
        k4 = rhs(f + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.mark.parametrize("augmented", [False, True], ids=["dt", "ct"])
def test_ltv_prediction_matches_dense_integration(nav, rng, augmented):
    dyn = SixDofDynamics.from_scenario(nav, augmented=augmented)
    ref = initial_reference(nav, augmented)
    grid = TimeGrid(nav.nodes)
    d = discretize(dyn, ref.x, ref.u, grid)
    t_nodes = node_times(ref.u, grid, S)
    n = dyn.n_x
    for k in (0, 5, 13):
        u0, u1 = ref.u[k], ref.u[k + 1]
        dx0 = 1e-3 * rng.normal(size=n)
        du0, du1 = 1e-3 * rng.normal(size=7), 1e-3 * rng.normal(size=7)

        def rhs(frac, z):
            x, dx = z[:n], z[n:]
            u = (1 - frac) * u0 + frac * u1
            du = (1 - frac) * du0 + frac * du1
            h = frac * grid.dtau
            t = t_nodes[k] + u0[S] * h + 0.5 * (u1[S] - u0[S]) * frac * h
            F, A, B = dyn.linearize(x[None], u[None], np.array([t]))
            return grid.dtau * np.r_[F[0], A[0] @ dx + B[0] @ du]

        dense = _rk4_dense(rhs, np.r_[ref.x[k], dx0], 2000)[n:]
        pred = d.A[k] @ dx0 + d.B_minus[k] @ du0 + d.B_plus[k] @ du1
        assert np.linalg.norm(pred - dense) <= 1e-6 * np.linalg.norm(dense)


def test_substep_refinement_is_fourth_order(nav):
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    ref = initial_reference(nav, False)
    ref.x[:, 10:13] = (0.5, -0.3, 0.2)
    grid = TimeGrid(nav.nodes)
    maps = [discretize(dyn, ref.x, ref.u, grid, n_sub=n) for n in (4, 8, 16)]
    e1 = np.max(np.abs(maps[0].A - maps[1].A))
    e2 = np.max(np.abs(maps[1].A - maps[2].A))
    assert 12.0 < e1 / e2 < 20.0


def test_nonfinite_discretization_raises_with_index():
    with pytest.raises(NumericalFailure) as err:
        discretize(Broken(1.0, 1.0), np.ones((3, 1)), np.ones((3, 1)), TimeGrid(3))
    assert err.value.index == 0


def test_nonpositive_dilation_rejected(nav):
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    ref = initial_reference(nav, False)
    ref.u[3, S] = 0.0
    with pytest.raises(ValueError):
        discretize(dyn, ref.x, ref.u, TimeGrid(nav.nodes))


# --- dense propagation ------------------------------------------------------

def test_hover_propagation_stays_put(nav):
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    x0 = np.zeros(13)
    x0[0:3] = (1.0, 2.0, 3.0)
    x0[6] = 1.0
    u = np.tile(hover_control(nav.vehicle, 4.0), (nav.nodes, 1))
    dense = propagate_nonlinear(dyn, x0, u, TimeGrid(nav.nodes), n_dense=1000)
    assert np.max(np.abs(dense.x[:, 0:3] - x0[0:3])) < 1e-6
    assert dense.x.shape == (1000, 13)


def test_violation_integral_is_nondecreasing(nav):
    dyn = SixDofDynamics.from_scenario(nav, augmented=True)
    ref = initial_reference(nav, True)
    x0 = ref.x[0].copy()
    x0[6:10] = attitude.axis_angle_quat((1.0, 0.0, 0.0), 2.5)  # facade out of view
    dense = propagate_nonlinear(dyn, x0, ref.u, TimeGrid(nav.nodes))
    assert np.all(np.diff(dense.x[:, 13]) >= 0.0)
    assert dense.x[-1, 13] > 0.0


def test_final_time_is_the_dilation_quadrature(nav, rng):
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    grid = TimeGrid(nav.nodes)
    u = np.tile(hover_control(nav.vehicle, 1.0), (nav.nodes, 1))
    u[:, S] = rng.uniform(0.2, 3.0, nav.nodes)
    dense = propagate_nonlinear(dyn, nav.x0, u, grid, n_dense=333)
    expected = np.sum(0.5 * (u[:-1, S] + u[1:, S]) * grid.dtau)
    assert dense.t[-1] == pytest.approx(expected, rel=1e-12)
    assert np.all(np.diff(dense.t) > 0)


def test_propagation_rejects_length_mismatch(nav):
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    with pytest.raises(ValueError):
        propagate_nonlinear(dyn, nav.x0, np.ones((3, 7)), TimeGrid(4))


def test_nonfinite_propagation_raises():
    with pytest.raises(NumericalFailure):
        propagate_nonlinear(Broken(1.0, 1.0), np.ones(1), np.ones((3, 1)), TimeGrid(3), n_dense=10)


def test_defects_match_dense_endpoints(nav):
    # each multiple-shooting endpoint equals single shooting over one interval
    dyn = SixDofDynamics.from_scenario(nav, augmented=False)
    ref = initial_reference(nav, False)
    grid = TimeGrid(nav.nodes)
    d = discretize(dyn, ref.x, ref.u, grid, n_sub=40)
    two = TimeGrid(2)
    k = 4
    u_pair = ref.u[k:k + 2].copy()
    u_pair[:, S] *= grid.dtau  # one interval rescaled to unit length
    t0 = node_times(ref.u, grid, S)[k]
    dense = propagate_nonlinear(dyn, ref.x[k], u_pair, two, n_dense=400, t0=t0)
    assert np.allclose(dense.x[-1], d.x_prop[k], atol=1e-7)
    assert np.allclose(d.defect[k], d.x_prop[k] - ref.x[k + 1])
