import numpy as np
import pytest

from eqfilter.errors import CovarianceNotPD
from eqfilter.filters import (
    EkfState,
    EqFState,
    EquivariantFilter,
    LinearisationMatrices,
    ekf_secondorder_jacobian,
    ekf_sphere_step,
    eqf_estimate,
    eqf_step,
    linearise_error_dynamics,
    linearise_output,
    lkf_measurement_cov,
    lkf_step,
)
from eqfilter.filters.eqf import check_covariance, error_field
from eqfilter.geometry import (
    POLAR_M_EMBED,
    dphi_origin,
    dphi_pseudoinverse,
    numerical_jacobian,
    stereo_chart,
    stereo_chart_inv,
)
from eqfilter.lie_core import so3_exp
from eqfilter.systems import GalileanSystem, PolarSystem, SphereSystem

DEG2RAD = np.pi / 180.0


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _galilean_lin(A=0.0, B=0.0, N=1.0, M=0.0):
    n = 6
    return LinearisationMatrices(A * np.eye(n), B * np.eye(n), np.eye(n), M * np.eye(n),
                                 N * np.eye(n))


# -- Riccati update --------------------------------------------------------

def test_scalar_riccati_euler_step():
    sys_ = GalileanSystem()
    state = EqFState(sys_.group.identity(), np.eye(6))
    new, delta = eqf_step(sys_, state, np.zeros(6), np.zeros(6), 0.02, _galilean_lin(),
                          np.eye(6), curvature=False, riccati="euler")
    np.testing.assert_allclose(new.Sigma, 0.98 * np.eye(6), atol=1e-15)
    np.testing.assert_array_equal(delta, np.zeros(6))


def test_scalar_riccati_split_step_is_exact_measurement_update():
    # Sigma' = Sigma - Sigma (Sigma + N/dt)^-1 Sigma = 1 / (1 + dt)
    sys_ = GalileanSystem()
    state = EqFState(sys_.group.identity(), np.eye(6))
    new, _ = eqf_step(sys_, state, np.zeros(6), np.zeros(6), 0.02, _galilean_lin(), np.eye(6),
                      curvature=False, riccati="split")
    np.testing.assert_allclose(new.Sigma, np.eye(6) / 1.02, atol=1e-15)
    assert abs(new.Sigma[0, 0] - 0.98) < 0.02 ** 2


def test_split_and_euler_agree_to_first_order(rng):
    sys_ = PolarSystem()
    filt = EquivariantFilter(sys_, np.diag([0.25] * 3 + [1.0] * 3), 1e-3 * np.eye(6),
                             1e-2 * np.eye(3))
    X = sys_.random_group(rng, 0.1)
    state = EqFState(X, filt.Sigma0)
    u = sys_.random_input(rng)
    r = rng.normal(scale=0.01, size=3)
    diffs = []
    for dt in (1e-3, 5e-4):
        lin = filt.linearisation(state, u)
        a, _ = eqf_step(sys_, state, u, r, dt, lin, filt.Dpinv, riccati="euler")
        b, _ = eqf_step(sys_, state, u, r, dt, lin, filt.Dpinv, riccati="split")
        diffs.append(np.max(np.abs(a.Sigma - b.Sigma)))
    assert diffs[0] / diffs[1] > 3.0  # O(dt^2) per step


def test_zero_innovation_zero_input_keeps_group_state(rng):
    sys_ = PolarSystem()
    filt = EquivariantFilter(sys_, np.eye(6), 1e-3 * np.eye(6), 1e-2 * np.eye(3))
    X = sys_.random_group(rng, 0.2)
    xi_hat = sys_.phi(X, sys_.origin)
    ys = {"bearing": xi_hat[:3] / np.linalg.norm(xi_hat[:3]),
          "range": np.array([np.linalg.norm(xi_hat[:3])])}
    # zero velocity and zero acceleration so the lift vanishes
    X = type(X)(X.R, X.r, X.r * (X.R @ sys_.origin[3:]))
    xi_hat = sys_.phi(X, sys_.origin)
    assert np.allclose(xi_hat[3:], 0.0)
    state = EqFState(X, filt.Sigma0)
    r = filt.residual(state, ys)
    np.testing.assert_allclose(r, np.zeros(3), atol=1e-12)
    lin = filt.linearisation(state, np.zeros(6))
    new, delta = eqf_step(sys_, state, np.zeros(6), r, 0.02, lin, filt.Dpinv)
    np.testing.assert_allclose(delta, np.zeros(7), atol=1e-12)
    np.testing.assert_allclose(sys_.group.as_matrix(new.X), sys_.group.as_matrix(X), atol=1e-12)
    assert not np.allclose(new.Sigma, state.Sigma)


def test_sphere_curvature_flag_has_no_effect(rng):
    sys_ = SphereSystem()
    kw = dict(Sigma0=2.0 * np.eye(2), input_cov=1e-4 * np.eye(3), output_cov=2e-3 * np.eye(2))
    on = EquivariantFilter(sys_, curvature=True, **kw)
    off = EquivariantFilter(sys_, curvature=False, **kw)
    s_on, s_off = on.initial_state(), off.initial_state()
    for _ in range(50):
        u = rng.normal(size=3)
        y = {"direction": unit(rng.normal(size=3) + [0, 0, 3])}
        s_on = on.step(s_on, u, y, 0.02)
        s_off = off.step(s_off, u, y, 0.02)
    np.testing.assert_array_equal(s_on.Sigma, s_off.Sigma)
    np.testing.assert_array_equal(s_on.X, s_off.X)


def test_check_covariance_raises_with_step():
    with pytest.raises(CovarianceNotPD) as info:
        check_covariance(np.diag([1.0, -1.0]), step=7)
    assert info.value.step == 7
    with pytest.raises(CovarianceNotPD):
        check_covariance(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_unknown_riccati_mode_rejected():
    with pytest.raises(ValueError):
        EquivariantFilter(SphereSystem(), np.eye(2), np.eye(3), np.eye(2), riccati="rk4")


# -- linearisation ---------------------------------------------------------

def test_sphere_state_matrix_is_zero(rng):
    sys_ = SphereSystem()
    for method in ("analytic", "fd"):
        A, B = linearise_error_dynamics(sys_, rng.normal(size=3), method=method)
        np.testing.assert_allclose(A, np.zeros((2, 2)), atol=1e-8)
    np.testing.assert_allclose(B, -np.hstack([np.eye(2), np.zeros((2, 1))]), atol=1e-8)


def test_galilean_state_matrix_is_double_integrator(rng):
    sys_ = GalileanSystem()
    expected = np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 3)), np.zeros((3, 3))]])
    for method in ("analytic", "fd"):
        A, _ = linearise_error_dynamics(sys_, rng.normal(size=6), method=method)
        np.testing.assert_allclose(A, expected, atol=1e-8)


def test_polar_state_matrix_analytic_vs_fd(rng):
    sys_ = PolarSystem()
    for _ in range(10):
        u0 = sys_.random_input(rng)
        A, B = linearise_error_dynamics(sys_, u0, method="analytic")
        Afd, Bfd = linearise_error_dynamics(sys_, u0, method="fd")
        np.testing.assert_allclose(A, Afd, atol=1e-6)
        np.testing.assert_allclose(B, Bfd, atol=1e-6)


def test_polar_state_matrix_richardson_consistency(rng):
    sys_ = PolarSystem()
    u0 = sys_.random_input(rng)
    x0 = np.zeros(6)
    A_h = numerical_jacobian(lambda x: error_field(sys_, x, u0), x0, 1e-4)
    A_h2 = numerical_jacobian(lambda x: error_field(sys_, x, u0), x0, 5e-5)
    np.testing.assert_allclose(A_h, A_h2, atol=1e-5)


def test_input_matrix_uses_transformed_noise(rng):
    sys_ = PolarSystem()
    X = sys_.random_group(rng, 0.3)
    u = sys_.random_input(rng)
    u0 = sys_.psi(sys_.group.inverse(X), u)
    _, B = linearise_error_dynamics(sys_, u0, X)
    Dc = sys_.dphi_chart()
    fd = Dc @ numerical_jacobian(lambda w: sys_.lift(sys_.origin, sys_.psi(sys_.group.inverse(X), w)), u)
    np.testing.assert_allclose(B, fd, atol=1e-6)


def test_polar_output_matrices_are_constant():
    sys_ = PolarSystem()
    bearing, rng_out = sys_.outputs
    C1 = linearise_output(sys_, [bearing])
    C2 = linearise_output(sys_, [rng_out])
    np.testing.assert_allclose(C1, np.hstack([np.eye(2), np.zeros((2, 4))]), atol=1e-6)
    np.testing.assert_allclose(C2, [[0, 0, 1, 0, 0, 0]], atol=1e-6)


def test_sphere_output_matrix_is_identity():
    np.testing.assert_allclose(linearise_output(SphereSystem()), np.eye(2), atol=1e-6)


# -- correction and curvature ----------------------------------------------

def test_correction_transport_matches_connection(rng):
    # chart Jacobian of e -> phi(exp(dt Delta), e) at the origin is I - dt Gamma_v
    sys_ = PolarSystem()
    for _ in range(10):
        delta = POLAR_M_EMBED @ rng.normal(size=6)
        dt = 0.01
        X = sys_.group.exp(dt * delta)
        J = numerical_jacobian(lambda x: sys_.chart(sys_.phi(X, sys_.chart_inv(x))), np.zeros(6))
        G = sys_.connection(sys_.dphi_chart() @ delta)
        err = np.max(np.abs(J - (np.eye(6) - dt * G)))
        assert err < 0.05 * dt * np.max(np.abs(G)) + 1e-7
        assert np.max(np.abs(J - (np.eye(6) + dt * G))) > 10 * err


def test_pseudoinverse_choice_only_moves_stabiliser(rng):
    sys_ = PolarSystem()
    filt = EquivariantFilter(sys_, np.diag([0.25] * 3 + [1.0] * 3), 1e-3 * np.eye(6),
                             1e-2 * np.eye(3))
    kernel = np.zeros(7)
    kernel[2] = 1.0
    alt = filt.Dpinv + np.outer(kernel, rng.normal(size=6))
    np.testing.assert_allclose(filt.Dchart @ alt, np.eye(6), atol=1e-12)
    X = sys_.random_group(rng, 0.2)
    state = EqFState(X, filt.Sigma0)
    u = sys_.random_input(rng)
    r = rng.normal(scale=0.05, size=3)
    gaps = []
    for dt in (0.02, 0.01):
        lin = filt.linearisation(state, u)
        a, _ = eqf_step(sys_, state, u, r, dt, lin, filt.Dpinv, riccati="euler")
        b, _ = eqf_step(sys_, state, u, r, dt, lin, alt, riccati="euler")
        np.testing.assert_allclose(a.Sigma, b.Sigma, atol=1e-14)
        gaps.append(np.max(np.abs(eqf_estimate(a, sys_) - eqf_estimate(b, sys_))))
    # the estimate differs only at second order in dt
    assert gaps[0] / gaps[1] > 3.0
    assert gaps[0] < 1e-3


# -- estimates -------------------------------------------------------------

def test_estimate_examples(rng):
    sys_ = SphereSystem()
    np.testing.assert_array_equal(eqf_estimate(EqFState(np.eye(3), np.eye(2)), sys_), [0, 0, 1])
    Q = so3_exp(rng.normal(size=3))
    np.testing.assert_allclose(eqf_estimate(EqFState(Q, np.eye(2)), sys_), Q.T @ [0, 0, 1])


@pytest.mark.parametrize("system", [SphereSystem(), GalileanSystem(), PolarSystem()],
                         ids=lambda s: s.name)
def test_estimate_equals_truth_when_error_is_origin(system, rng):
    for _ in range(20):
        X = system.random_group(rng)
        xi = system.phi(X, system.origin)
        e = system.phi(system.group.inverse(X), xi)
        np.testing.assert_allclose(e, system.origin, atol=1e-10)
        np.testing.assert_allclose(eqf_estimate(EqFState(X, None), system), xi, atol=1e-12)


def test_energy_is_nonnegative_and_zero_at_truth(rng):
    sys_ = PolarSystem()
    filt = EquivariantFilter(sys_, np.eye(6), np.eye(6), np.eye(3))
    X = sys_.random_group(rng, 0.3)
    state = EqFState(X, np.eye(6))
    assert filt.energy(state, sys_.phi(X, sys_.origin)) == pytest.approx(0.0, abs=1e-20)
    assert filt.energy(state, sys_.random_state(rng)) > 0.0


# -- sphere EKF ------------------------------------------------------------

def test_sphere_ekf_static_consistent_measurement(rng):
    eta = unit([0.3, -0.2, 0.9])
    state = EkfState(eta, 0.1 * np.eye(2))
    new = ekf_sphere_step(state, np.zeros(3), eta, 0.02, 0.1, 0.01)
    np.testing.assert_allclose(new.x, eta, atol=1e-15)
    # measurement shrinks the covariance; gyro noise adds a small amount back
    assert np.all(np.linalg.eigvalsh(new.Sigma) < 0.1)
    zero_gyro = ekf_sphere_step(state, np.zeros(3), eta, 0.02, 0.1, 0.0)
    assert np.all(np.linalg.eigvalsh(new.Sigma - zero_gyro.Sigma) > 0)


def test_sphere_ekf_correction_moves_toward_measurement(rng):
    for _ in range(20):
        eta = unit(rng.normal(size=3))
        y = unit(eta + 0.01 * rng.normal(size=3))
        new = ekf_sphere_step(EkfState(eta, 0.5 * np.eye(2)), np.zeros(3), y, 0.02, 0.1, 0.0)
        before = np.arccos(np.clip(eta @ y, -1, 1))
        after = np.arccos(np.clip(new.x @ y, -1, 1))
        assert after < before
        # the correction lies on the chart geodesic from eta to y
        s_y = stereo_chart(y, eta)
        s_new = stereo_chart(new.x, eta)
        assert abs(s_y[0] * s_new[1] - s_y[1] * s_new[0]) < 1e-12
        assert s_y @ s_new > 0


def test_sphere_ekf_recentering_invariance(rng):
    for _ in range(20):
        eta = unit(rng.normal(size=3))
        y = stereo_chart_inv(rng.uniform(-1e-3, 1e-3, size=2), eta)
        center = unit(eta + 0.3 * rng.normal(size=3))
        state = EkfState(eta, 0.2 * np.eye(2))
        omega = rng.normal(size=3)
        a = ekf_sphere_step(state, omega, y, 0.02, 0.1, 0.01)
        b = ekf_sphere_step(state, omega, y, 0.02, 0.1, 0.01, center=center)
        assert np.max(np.abs(a.x - b.x)) < 1e-6


# -- second-order EKF and LKF ----------------------------------------------

def test_ekf_jacobian_at_origin_position():
    H = ekf_secondorder_jacobian(np.array([0.0, 0.0, 50.0]))
    np.testing.assert_allclose(H[:3, :3] @ [0, 0, 1], np.zeros(3), atol=1e-15)
    np.testing.assert_allclose(H[3, :3], [0, 0, 1])
    np.testing.assert_array_equal(H[:, 3:], np.zeros((4, 3)))


def test_ekf_jacobian_matches_fd(rng):
    def h(x):
        p = x[:3]
        n = np.linalg.norm(p)
        return np.concatenate([p / n, [n]])
    for _ in range(20):
        x = np.concatenate([rng.normal(scale=20, size=3), rng.normal(size=3)])
        np.testing.assert_allclose(ekf_secondorder_jacobian(x[:3]), numerical_jacobian(h, x),
                                   atol=1e-6)


def test_lkf_measurement_covariance_eigenvalues():
    k = DEG2RAD ** 2
    R = lkf_measurement_cov(np.array([0.0, 0.0, 1.0]), 50.0, 4.0 * k, 4.0)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(R)),
                               np.sort([4 * 50 ** 2 * k, 4 * 50 ** 2 * k, 4.0]), rtol=1e-12)


def test_lkf_converges_monotonically_on_perfect_measurements():
    # near-zero noise matrices: exactly zero would make the posterior singular
    p = np.array([3.0, -4.0, 48.0])
    x = np.concatenate([p + [2.0, -1.0, 3.0], np.zeros(3)])
    state = EkfState(x, np.diag([25.0] * 3 + [1.0] * 3))
    errs = [np.linalg.norm(state.x[:3] - p)]
    y1, y2 = p / np.linalg.norm(p), np.linalg.norm(p)
    for k in range(10):
        state = lkf_step(state, np.zeros(3), y1, y2, 0.02, 1e-12, 1e-12, 1e-12, step=k)
        errs.append(np.linalg.norm(state.x[:3] - p))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


def test_lkf_innovation_vanishes_at_steady_state():
    p = np.array([10.0, 0.0, 40.0])
    state = EkfState(np.concatenate([p + 1.0, np.zeros(3)]), np.eye(6))
    y1, y2 = p / np.linalg.norm(p), np.linalg.norm(p)
    innov = []
    for k in range(3000):
        state = lkf_step(state, np.zeros(3), y1, y2, 0.02, 1e-3, 1e-2, 1e-4, step=k)
        innov.append(np.linalg.norm(y1 * y2 - state.x[:3]))
    assert innov[-1] < 1e-3 * innov[0]
    assert np.max(np.abs(state.x[3:])) < 1e-3
