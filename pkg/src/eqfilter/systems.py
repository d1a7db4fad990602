"""The three worked symmetry systems.

* :class:`SphereSystem`   direction kinematics on S^2 with SO(3) symmetry.
* :class:`GalileanSystem` second-order kinematics with additive symmetry.
* :class:`PolarSystem`    second-order kinematics with the polar group, which
  makes bearing and range outputs equivariant.

Second-order states are flat arrays ``(p, v)`` and inputs ``(w, a)`` where
``w`` is the virtual velocity input; true trajectories always use ``w = 0``.
"""

import numpy as np

from .errors import ZeroPosition
from .geometry import (
    POLAR_M_EMBED,
    Output,
    SymmetrySystem,
    chart_sphere,
    chart_sphere_inv,
    connection_polar,
)
from .lie_core import (
    SO3,
    Galilean,
    Pol,
    Polar,
    cross,
    pol_exp,
    pol_translation_matrix,
    skew,
    so3_exp,
)

ZERO_POSITION_TOL = 1e-9
E3 = np.array([0.0, 0.0, 1.0])


def bearing_range(p):
    """Bearing ``p/|p|`` and range ``|p|``."""
    n = float(np.sqrt(p @ p))
    if n < ZERO_POSITION_TOL:
        raise ZeroPosition(f"|p| = {n:.3g} is too small for bearing/range")
    return p / n, n


def bearing(p):
    return bearing_range(p)[0]


def range_(p):
    return bearing_range(p)[1]


class SphereSystem(SymmetrySystem):
    """``eta' = -Omega x eta`` on S^2 with ``phi(Q, eta) = Q^T eta``."""

    name = "sphere"
    group = SO3
    state_dim = 3
    chart_dim = 2
    input_dim = 3

    def __init__(self):
        self.origin = E3.copy()
        self.outputs = (
            Output("direction", 2, h=lambda eta: eta,
                   action=lambda Q, y: Q.T @ y, chart=chart_sphere),
        )

    def phi(self, Q, eta):
        return Q.T @ eta

    def psi(self, Q, omega):
        return Q.T @ omega

    def f(self, eta, omega):
        return -cross(omega, eta)

    def lift(self, eta, omega):
        return np.array(omega, dtype=float)

    def chart(self, eta):
        return chart_sphere(eta)

    def chart_inv(self, x):
        return chart_sphere_inv(x)

    def normalize(self, eta):
        return eta / np.linalg.norm(eta)

    def dphi(self, eta):
        # d/dt exp(-t U^x) eta = eta x U
        return skew(eta)

    def dphi_group(self, Q):
        return Q.T

    def psi_linear(self, Q):
        return Q.T

    def lift_state_jacobian(self, eta, omega):
        return np.zeros((3, 3))

    def lift_input_jacobian(self, eta, omega):
        return np.eye(3)

    def chart_inv_jacobian(self):
        return np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])

    def dphi_chart(self):
        return np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])

    def random_state(self, rng):
        eta = rng.normal(size=3)
        return eta / np.linalg.norm(eta)

    def random_group(self, rng, scale=1.0):
        return SO3.random(rng, scale)


class GalileanSystem(SymmetrySystem):
    """``(p, v)' = (v + w, a)`` with ``phi((alpha, beta), (p, v)) = (p + alpha, v + beta)``.

    Position is the equivariant output; bearing and range are carried as
    non-equivariant outputs for the baseline filters.
    """

    name = "galilean"
    group = Galilean
    state_dim = 6
    chart_dim = 6
    input_dim = 6

    _A = np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 3)), np.zeros((3, 3))]])

    def __init__(self):
        self.origin = np.zeros(6)
        self.outputs = (
            Output("position", 3, h=lambda xi: xi[:3].copy(),
                   action=lambda X, y: y + X[:3], chart=lambda y: y.copy()),
            Output("bearing", 2, h=lambda xi: bearing(xi[:3])),
            Output("range", 1, h=lambda xi: np.array([range_(xi[:3])])),
        )

    def phi(self, X, xi):
        return xi + X

    def psi(self, X, u):
        out = np.array(u, dtype=float)
        out[:3] -= X[3:]
        return out

    def f(self, xi, u):
        return np.concatenate([xi[3:] + u[:3], u[3:]])

    def lift(self, xi, u):
        return np.concatenate([xi[3:] + u[:3], u[3:]])

    def chart(self, xi):
        return xi - self.origin

    def chart_inv(self, x):
        return self.origin + x

    def dphi(self, xi):
        return np.eye(6)

    def dphi_group(self, X):
        return np.eye(6)

    def psi_linear(self, X):
        return np.eye(6)

    def lift_state_jacobian(self, xi, u):
        return self._A.copy()

    def lift_input_jacobian(self, xi, u):
        return np.eye(6)

    def chart_inv_jacobian(self):
        return np.eye(6)

    def dphi_chart(self):
        return np.eye(6)

    def random_state(self, rng):
        return rng.normal(scale=10.0, size=6)

    def random_input(self, rng):
        return rng.normal(size=6)


class PolarSystem(SymmetrySystem):
    """Second-order kinematics under the polar group.

    ``phi((R, r, beta), (p, v)) = (R^T p / r, R^T (v - beta) / r)`` and the
    outputs are bearing ``p/|p|`` and range ``|p|``.  The origin is
    ``((0, 0, rho0), 0)``.  Chart coordinates are ordered
    (bearing 2, log-range 1, velocity 3).
    """

    name = "polar"
    group = Polar
    state_dim = 6
    chart_dim = 6
    input_dim = 6

    def __init__(self, rho0=50.0):
        self.rho0 = float(rho0)
        self.origin = np.array([0.0, 0.0, self.rho0, 0.0, 0.0, 0.0])
        rho0_ = self.rho0
        self.outputs = (
            Output("bearing", 2, h=lambda xi: bearing(xi[:3]),
                   action=lambda X, y: X.R.T @ y,
                   chart=lambda y: -chart_sphere(y)),
            Output("range", 1, h=lambda xi: np.array([range_(xi[:3])]),
                   action=lambda X, y: y / X.r,
                   chart=lambda y: np.log(rho0_ / y)),
        )
        self._dphi_origin_amb = self.dphi(self.origin)
        self._chart_inv_jac = self._dphi_origin_amb @ POLAR_M_EMBED

    def phi(self, X, xi):
        Rt = X.R.T
        k = 1.0 / X.r
        return np.concatenate([k * (Rt @ xi[:3]), k * (Rt @ (xi[3:] - X.beta))])

    def psi(self, X, u):
        Rt = X.R.T
        k = 1.0 / X.r
        return np.concatenate([k * (Rt @ (u[:3] + X.beta)), k * (Rt @ u[3:])])

    def f(self, xi, u):
        return np.concatenate([xi[3:] + u[:3], u[3:]])

    def lift(self, xi, u):
        """Algebra element ``(W, lambda, b)`` whose induced flow reproduces ``f``.

        With ``s = v + w``: ``W = -(p x s)/|p|^2``, ``lambda = -(p . s)/|p|^2``
        and ``b = ((p x s) x v + (p . s) v)/|p|^2 - a``.
        """
        p, v = xi[:3], xi[3:]
        q = float(p @ p)
        if q < ZERO_POSITION_TOL ** 2:
            raise ZeroPosition("polar lift undefined at p = 0")
        s = v + u[:3]
        c = cross(p, s)
        d = float(p @ s)
        b = (cross(c, v) + d * v) / q - u[3:]
        out = np.empty(7)
        out[:3] = -c / q
        out[3] = -d / q
        out[4:] = b
        return out

    def lift_state_jacobian(self, xi, u):
        p, v = xi[:3], xi[3:]
        q = float(p @ p)
        if q < ZERO_POSITION_TOL ** 2:
            raise ZeroPosition("polar lift undefined at p = 0")
        s = v + u[:3]
        c = cross(p, s)
        d = float(p @ s)
        g = cross(c, v) + d * v
        P, S, V = skew(p), skew(s), skew(v)
        J = np.zeros((7, 6))
        J[:3, :3] = S / q + 2.0 * np.outer(c, p) / q**2
        J[:3, 3:] = -P / q
        J[3, :3] = -s / q + 2.0 * d * p / q**2
        J[3, 3:] = -p / q
        dg_dp = V @ S + np.outer(v, s)
        dg_dv = -V @ P + skew(c) + np.outer(v, p) + d * np.eye(3)
        J[4:, :3] = dg_dp / q - 2.0 * np.outer(g, p) / q**2
        J[4:, 3:] = dg_dv / q
        return J

    def lift_input_jacobian(self, xi, u):
        p, v = xi[:3], xi[3:]
        q = float(p @ p)
        if q < ZERO_POSITION_TOL ** 2:
            raise ZeroPosition("polar lift undefined at p = 0")
        P, V = skew(p), skew(v)
        J = np.zeros((7, 6))
        J[:3, :3] = -P / q
        J[3, :3] = -p / q
        J[4:, :3] = (-V @ P + np.outer(v, p)) / q
        J[4:, 3:] = -np.eye(3)
        return J

    def dphi(self, xi):
        p, v = xi[:3], xi[3:]
        D = np.zeros((6, 7))
        D[:3, :3] = skew(p)
        D[:3, 3] = -p
        D[3:, :3] = skew(v)
        D[3:, 3] = -v
        D[3:, 4:] = -np.eye(3)
        return D

    def dphi_group(self, X):
        k = 1.0 / X.r
        D = np.zeros((6, 6))
        D[:3, :3] = k * X.R.T
        D[3:, 3:] = k * X.R.T
        return D

    def psi_linear(self, X):
        return self.dphi_group(X)

    def chart_inv(self, x):
        return self.phi(pol_exp(POLAR_M_EMBED @ np.asarray(x, dtype=float)), self.origin)

    def chart(self, xi):
        """Closed-form inverse of :meth:`chart_inv`.

        The bearing fixes the rotation, the range fixes the scale, and the
        velocity is then linear in the translational coordinates.
        """
        p, v = xi[:3], xi[3:]
        y, n = bearing_range(p)
        w = -chart_sphere(y)
        lam = np.log(self.rho0 / n)
        W = np.array([w[0], w[1], 0.0])
        R = so3_exp(W)
        Vm = pol_translation_matrix(W, lam)
        b = -np.exp(lam) * np.linalg.solve(Vm, R @ v)
        return np.array([w[0], w[1], lam, b[0], b[1], b[2]])

    def chart_inv_jacobian(self):
        return self._chart_inv_jac.copy()

    def dphi_chart(self):
        return POLAR_M_EMBED.T.copy()

    def connection(self, v):
        return connection_polar(v)

    def random_state(self, rng):
        p = rng.normal(size=3)
        p *= rng.uniform(1.0, 100.0) / np.linalg.norm(p)
        return np.concatenate([p, rng.normal(size=3)])

    def random_input(self, rng):
        return rng.normal(size=6)

    def random_group(self, rng, scale=1.0):
        X = Polar.random(rng, scale)
        return Pol(X.R, X.r, X.beta)
