"""Baseline filters used for comparison with the EqF.

* :class:`SphereEKF`  classical EKF on S^2 in a stereographic chart that is
  re-centred on the estimate every step.
* :class:`SecondOrderEKF` EKF on (p, v) in Euclidean coordinates with the
  bearing and range outputs linearised at the current estimate.
* :class:`LinearKF` linear Kalman filter fed the reconstructed position
  ``y1 * y2`` with a measurement-dependent covariance.

All three use the discrete update-then-predict form of the Kalman filter with
per-step noise variances, so their Riccati recursions match the split scheme
used by :func:`eqfilter.filters.eqf.eqf_step`.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ZeroPosition
from ..geometry import (
    stereo_chart,
    stereo_chart_inv,
    stereo_chart_inv_jacobian,
    stereo_chart_jacobian,
    tangent_basis,
)
from ..lie_core import cross, skew
from .eqf import check_covariance

_A_SECOND_ORDER = np.block([[np.zeros((3, 3)), np.eye(3)],
                            [np.zeros((3, 3)), np.zeros((3, 3))]])


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    Sigma: np.ndarray


def _kalman_update(x_chart, Sigma, H, R, residual):
    HS = H @ Sigma
    S = HS @ H.T + R
    Kt = np.linalg.solve(S, HS)  # S^-1 H Sigma
    x_new = x_chart + Kt.T @ residual
    Sigma_new = Sigma - HS.T @ Kt
    return x_new, 0.5 * (Sigma_new + Sigma_new.T)


def _chart_change(s, from_c, from_T, to_c, to_T):
    """Jacobian of ``stereo(to) o stereo_inv(from)`` at ``s``."""
    eta = stereo_chart_inv(s, from_c, from_T)
    return stereo_chart_jacobian(eta, to_c, to_T) @ stereo_chart_inv_jacobian(s, from_c, from_T)


def _sphere_propagate(eta, omega, dt):
    eta = eta - dt * cross(omega, eta)
    return eta / np.sqrt(eta @ eta)


def _sphere_propagate_jacobian(eta, omega, dt):
    """Ambient Jacobian of :func:`_sphere_propagate`."""
    M = np.eye(3) - dt * skew(omega)
    z = M @ eta
    n = np.sqrt(z @ z)
    zh = z / n
    return (np.eye(3) - np.outer(zh, zh)) @ M / n


def ekf_sphere_step(state, omega, y, dt, meas_var, gyro_var, center=None, step=None):
    """One EKF step for direction kinematics.

    ``Sigma`` lives in the stereographic chart centred on the estimate.  The
    correction is carried out in the chart centred on ``center`` (the estimate
    by default); the covariance and the measurement noise are moved between
    charts with the chart change Jacobian.
    """
    eta, Sigma = state.x, state.Sigma
    T = tangent_basis(eta)
    if center is None:
        c, Tc = eta, T
        s0 = np.zeros(2)
        Sc = Sigma
        Rc = meas_var * np.eye(2)
    else:
        c = np.asarray(center, dtype=float)
        Tc = tangent_basis(c)
        s0 = stereo_chart(eta, c, Tc)
        J = _chart_change(np.zeros(2), eta, T, c, Tc)
        Sc = J @ Sigma @ J.T
        Rc = meas_var * (J @ J.T)

    r = stereo_chart(y, c, Tc) - s0
    s1, Sc = _kalman_update(s0, Sc, np.eye(2), Rc, r)
    eta1 = stereo_chart_inv(s1, c, Tc)
    T1 = tangent_basis(eta1)
    J = _chart_change(s1, c, Tc, eta1, T1)
    Sigma1 = J @ Sc @ J.T

    eta2 = _sphere_propagate(eta1, omega, dt)
    T2 = tangent_basis(eta2)
    F = (stereo_chart_jacobian(eta2, eta2, T2) @ _sphere_propagate_jacobian(eta1, omega, dt)
         @ stereo_chart_inv_jacobian(np.zeros(2), eta1, T1))
    G = dt * (T2 @ skew(eta1))
    Sigma2 = F @ Sigma1 @ F.T + gyro_var * (G @ G.T)
    Sigma2 = 0.5 * (Sigma2 + Sigma2.T)
    check_covariance(Sigma2, step)
    return EkfState(eta2, Sigma2)


def ekf_secondorder_jacobian(p):
    """Stacked Jacobian of bearing (3 rows) and range (1 row) with respect to (p, v)."""
    n = float(np.sqrt(p @ p))
    if n < 1e-9:
        raise ZeroPosition("EKF linearisation undefined at p = 0")
    b = p / n
    H = np.zeros((4, 6))
    H[:3, :3] = (np.eye(3) - np.outer(b, b)) / n
    H[3, :3] = b
    return H


def _second_order_predict(x, Sigma, a, dt, accel_var):
    x_new = np.concatenate([x[:3] + dt * x[3:], x[3:] + dt * a])
    Phi = np.eye(6) + dt * _A_SECOND_ORDER
    Sigma_new = Phi @ Sigma @ Phi.T
    Sigma_new[3:, 3:] += (dt * dt * accel_var) * np.eye(3)
    return x_new, 0.5 * (Sigma_new + Sigma_new.T)


def ekf_secondorder_step(state, a, y1, y2, dt, bearing_var, range_var, accel_var, step=None):
    """EKF on (p, v) with bearing/range linearised at the estimate.

    ``bearing_var`` is the variance of the bearing rotation angle in rad^2;
    it spreads evenly over the two tangent directions.
    """
    x, Sigma = state.x, state.Sigma
    p = x[:3]
    n = float(np.sqrt(p @ p))
    H = ekf_secondorder_jacobian(p)
    r = np.concatenate([y1 - p / n, [float(np.ravel(y2)[0]) - n]])
    R = np.diag([0.5 * bearing_var] * 3 + [range_var])
    x, Sigma = _kalman_update(x, Sigma, H, R, r)
    x, Sigma = _second_order_predict(x, Sigma, a, dt, accel_var)
    check_covariance(Sigma, step)
    return EkfState(x, Sigma)


def lkf_measurement_cov(y1, y2, bearing_var, range_var):
    """Covariance of ``y1 * y2`` as an estimate of position."""
    P = np.outer(y1, y1)
    return bearing_var * y2 * y2 * (np.eye(3) - P) + range_var * P


def lkf_step(state, a, y1, y2, dt, bearing_var, range_var, accel_var, step=None):
    """Linear KF on (p, v) using the reconstructed position measurement."""
    x, Sigma = state.x, state.Sigma
    y2 = float(np.ravel(y2)[0])
    H = np.hstack([np.eye(3), np.zeros((3, 3))])
    R = lkf_measurement_cov(y1, y2, bearing_var, range_var)
    x, Sigma = _kalman_update(x, Sigma, H, R, y1 * y2 - x[:3])
    x, Sigma = _second_order_predict(x, Sigma, a, dt, accel_var)
    check_covariance(Sigma, step)
    return EkfState(x, Sigma)


def _mahalanobis(Sigma, e):
    return float(e @ np.linalg.solve(Sigma, e))


class SphereEKF:
    def __init__(self, Sigma0, meas_var, gyro_var, eta0=(0.0, 0.0, 1.0)):
        self.Sigma0 = np.array(Sigma0, dtype=float)
        self.meas_var = float(meas_var)
        self.gyro_var = float(gyro_var)
        self.eta0 = np.array(eta0, dtype=float)

    def initial_state(self):
        return EkfState(self.eta0.copy(), self.Sigma0.copy())

    def step(self, state, u, ys, dt, step=None):
        return ekf_sphere_step(state, u, ys["direction"], dt, self.meas_var, self.gyro_var,
                               step=step)

    def estimate(self, state):
        return state.x

    def error_coords(self, state, eta):
        return stereo_chart(eta, state.x)

    def energy(self, state, eta):
        return _mahalanobis(state.Sigma, self.error_coords(state, eta))


class _SecondOrderFilter:
    def __init__(self, Sigma0, bearing_var, range_var, accel_var, x0):
        self.Sigma0 = np.array(Sigma0, dtype=float)
        self.bearing_var = float(bearing_var)
        self.range_var = float(range_var)
        self.accel_var = float(accel_var)
        self.x0 = np.array(x0, dtype=float)

    def initial_state(self):
        return EkfState(self.x0.copy(), self.Sigma0.copy())

    def estimate(self, state):
        return state.x

    def error_coords(self, state, xi):
        return xi - state.x

    def energy(self, state, xi):
        return _mahalanobis(state.Sigma, self.error_coords(state, xi))


class SecondOrderEKF(_SecondOrderFilter):
    def step(self, state, u, ys, dt, step=None):
        return ekf_secondorder_step(state, u[3:], ys["bearing"], ys["range"], dt,
                                    self.bearing_var, self.range_var, self.accel_var, step=step)


class LinearKF(_SecondOrderFilter):
    def step(self, state, u, ys, dt, step=None):
        return lkf_step(state, u[3:], ys["bearing"], ys["range"], dt,
                        self.bearing_var, self.range_var, self.accel_var, step=step)
