"""Equivariant Filter with the curvature-modified Riccati equation.

The observer state is a group element ``X_hat`` and a chart-coordinate
covariance ``Sigma``.  Each step forms the equivariant innovation
``rho(X_hat^-1, y)``, turns it into a correction ``Delta`` in the Lie algebra
and updates

    X_hat <- exp(-dt Delta) X_hat exp(dt Lambda(phi(X_hat, origin), u))

while ``Sigma`` follows the Riccati equation of the linearised error system,
with an optional transport term ``-Gamma Sigma - Sigma Gamma^T`` driven by the
connection function evaluated on the correction.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import CovarianceNotPD
from ..geometry import dphi_origin, dphi_pseudoinverse, numerical_jacobian

RICCATI_MODES = ("split", "euler")


@dataclass(frozen=True)
class EqFState:
    X: object
    Sigma: np.ndarray


@dataclass(frozen=True)
class LinearisationMatrices:
    """Continuous-time linearisation of the error system in chart coordinates.

    ``M`` is the input-noise covariance mapped by ``B`` and ``N`` the output
    noise covariance in output-chart coordinates.  ``Q`` is an optional extra
    additive process term on the chart coordinates.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    M: np.ndarray
    N: np.ndarray
    Q: Optional[np.ndarray] = None


def check_covariance(Sigma, step=None):
    """Raise :class:`CovarianceNotPD` unless ``Sigma`` has a Cholesky factor."""
    if not np.all(np.isfinite(Sigma)):
        raise CovarianceNotPD("covariance has non-finite entries", step)
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise CovarianceNotPD(
            f"covariance lost positive definiteness (min eig {np.linalg.eigvalsh(Sigma)[0]:.3g})",
            step) from None


def origin_input(system, X, u):
    """Input transformed to the origin frame, ``psi(X^-1, u)``."""
    return system.psi(system.group.inverse(X), u)


def error_field(system, x, u_origin, t=1e-4):
    """Unforced error dynamics in chart coordinates at chart point ``x``.

    The flow of ``Lambda(e, u0) - Lambda(origin, u0)`` through the action is
    differentiated by a central difference of step ``t``.
    """
    g = system.group
    e = system.chart_inv(x)
    U = system.lift(e, u_origin) - system.lift(system.origin, u_origin)
    fp = system.chart(system.phi(g.exp(t * U), e))
    fm = system.chart(system.phi(g.exp(-t * U), e))
    return (fp - fm) / (2.0 * t)


def linearise_error_dynamics(system, u_origin, X=None, method="analytic", step=1e-5):
    """Return ``(A, B)`` for the error system linearised at the origin.

    ``A`` differentiates ``Dphi_e (Lambda(e, u0) - Lambda(origin, u0))`` in
    chart coordinates at ``e = origin``.  ``B`` maps raw input noise through
    ``psi(X^-1, .)`` and the input Jacobian of the lift; without ``X`` the
    origin-frame input Jacobian is returned.
    """
    Dc = system.dphi_chart()
    if method == "analytic":
        A = Dc @ system.lift_state_jacobian(system.origin, u_origin) @ system.chart_inv_jacobian()
        Bu = Dc @ system.lift_input_jacobian(system.origin, u_origin)
    elif method == "fd":
        A = numerical_jacobian(lambda x: error_field(system, x, u_origin),
                               np.zeros(system.chart_dim), step)
        Bu = Dc @ numerical_jacobian(lambda w: system.lift(system.origin, w), u_origin, step)
    else:
        raise ValueError(f"unknown method {method!r}")
    if X is not None:
        Bu = Bu @ system.psi_linear(system.group.inverse(X))
    return A, Bu


def linearise_output(system, outputs=None):
    """Stacked output matrix ``d/dx delta(h(chart_inv(x)))`` at ``x = 0``."""
    if outputs is None:
        outputs = [o for o in system.outputs if o.equivariant]
    blocks = []
    for o in outputs:
        blocks.append(numerical_jacobian(lambda x: o.chart(o.h(system.chart_inv(x))),
                                         np.zeros(system.chart_dim)))
    return np.vstack(blocks)


def equivariant_innovation(system, X, ys, outputs):
    """Output-chart coordinates of ``rho(X^-1, y)`` for each output, stacked."""
    Xinv = system.group.inverse(X)
    return np.concatenate([np.atleast_1d(o.chart(o.action(Xinv, ys[o.name]))) for o in outputs])


def eqf_estimate(state, system):
    return system.phi(state.X, system.origin)


def eqf_step(system, state, u, residual, dt, lin, Dpinv, Dchart=None,
             curvature=True, riccati="split", step=None):
    """Advance the filter by one step of length ``dt``.

    ``residual`` is the output-chart innovation minus its value at the origin.
    Returns ``(new_state, Delta)``.
    """
    g = system.group
    X = state.X
    Sigma = state.Sigma
    C = lin.C
    BMBt = lin.B @ lin.M @ lin.B.T
    if lin.Q is not None:
        BMBt = BMBt + lin.Q
    if Dchart is None:
        Dchart = system.dphi_chart()

    if riccati == "euler":
        L = np.linalg.cholesky(lin.N)
        NinvC = np.linalg.solve(L.T, np.linalg.solve(L, C))
        K = Sigma @ NinvC.T
        delta = -Dpinv @ (K @ residual)
        dSigma = lin.A @ Sigma + Sigma @ lin.A.T + BMBt - K @ C @ Sigma
        if curvature:
            G = system.connection(Dchart @ delta)
            dSigma = dSigma - G @ Sigma - Sigma @ G.T
        Sigma_new = Sigma + dt * dSigma
    elif riccati == "split":
        # Measurement term integrated exactly over the step, then transport and
        # propagation.  Reduces to the Euler update as dt -> 0.
        CS = C @ Sigma
        S = CS @ C.T + lin.N / dt
        Kt = np.linalg.solve(S, CS)  # S^-1 C Sigma
        Sigma_new = Sigma - CS.T @ Kt
        delta = -Dpinv @ (Kt.T @ residual) / dt
        if curvature:
            G = dt * system.connection(Dchart @ delta)
            E = np.eye(G.shape[0]) - G + 0.5 * (G @ G)
            Sigma_new = E @ Sigma_new @ E.T
        Phi = np.eye(Sigma.shape[0]) + dt * lin.A
        Sigma_new = Phi @ Sigma_new @ Phi.T + dt * BMBt
    else:
        raise ValueError(f"unknown Riccati mode {riccati!r}")

    Sigma_new = 0.5 * (Sigma_new + Sigma_new.T)
    check_covariance(Sigma_new, step)

    lam = system.lift(system.phi(X, system.origin), u)
    X_new = g.compose(g.compose(g.exp(-dt * delta), X), g.exp(dt * lam))
    X_new = g.normalize(X_new)
    return EqFState(X_new, Sigma_new), delta


class EquivariantFilter:
    """Bundles a system with its noise model and fixed linearisation pieces.

    ``input_cov`` is the continuous-time covariance of the raw input noise.
    ``output_cov`` is a matrix or a callable ``(system, X) -> N`` giving the
    continuous-time covariance in output-chart coordinates.
    """

    def __init__(self, system, Sigma0, input_cov, output_cov, outputs=None,
                 curvature=True, riccati="split", process_cov=None, Dpinv=None,
                 X0=None):
        if riccati not in RICCATI_MODES:
            raise ValueError(f"unknown Riccati mode {riccati!r}")
        self.system = system
        self.outputs = tuple(outputs if outputs is not None
                             else [o for o in system.outputs if o.equivariant])
        self.Sigma0 = np.array(Sigma0, dtype=float)
        self.input_cov = np.asarray(input_cov, dtype=float)
        self.output_cov = output_cov
        self.curvature = curvature
        self.riccati = riccati
        self.process_cov = process_cov
        self.Dchart = dphi_origin(system)
        self.Dpinv = dphi_pseudoinverse(system, self.Dchart) if Dpinv is None else np.asarray(Dpinv)
        self.C = linearise_output(system, self.outputs)
        self.delta_hat = np.concatenate([np.atleast_1d(o.chart(o.h(system.origin)))
                                         for o in self.outputs])
        self.X0 = system.group.identity() if X0 is None else X0

    def initial_state(self):
        return EqFState(self.X0, self.Sigma0.copy())

    def linearisation(self, state, u):
        sys_ = self.system
        u0 = origin_input(sys_, state.X, u)
        A, B = linearise_error_dynamics(sys_, u0, state.X)
        N = self.output_cov(sys_, state.X) if callable(self.output_cov) else self.output_cov
        return LinearisationMatrices(A, B, self.C, self.input_cov, np.asarray(N, dtype=float),
                                     self.process_cov)

    def residual(self, state, ys):
        return equivariant_innovation(self.system, state.X, ys, self.outputs) - self.delta_hat

    def step(self, state, u, ys, dt, step=None):
        lin = self.linearisation(state, u)
        r = self.residual(state, ys)
        new, _ = eqf_step(self.system, state, u, r, dt, lin, self.Dpinv, self.Dchart,
                          curvature=self.curvature, riccati=self.riccati, step=step)
        return new

    def estimate(self, state):
        return eqf_estimate(state, self.system)

    def error_coords(self, state, xi):
        sys_ = self.system
        return sys_.chart(sys_.phi(sys_.group.inverse(state.X), xi))

    def energy(self, state, xi):
        eps = self.error_coords(state, xi)
        return float(eps @ np.linalg.solve(state.Sigma, eps))
