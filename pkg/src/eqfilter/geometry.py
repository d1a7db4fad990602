"""Homogeneous-space machinery shared by the concrete systems.

States and inputs are flat float arrays; group elements are whatever the
system's group namespace in :mod:`eqfilter.lie_core` uses.  All actions are
right actions, ``phi(X, phi(Y, xi)) == phi(Y @ X, xi)``, and the differential
of the action at ``xi`` is ``Dphi_xi(U) = d/dt phi(exp(t U), xi)`` at ``t = 0``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AntipodePoint, RankDeficient
from .lie_core import cross, pol_ad_matrix, pol_bracket

FD_STEP = 1e-6
RANK_TOL = 1e-8

# Coordinates of the polar algebra kept by the reductive complement: everything
# except the rotation about e3, which generates the stabiliser of the origin.
POLAR_M_INDEX = np.array([0, 1, 3, 4, 5, 6])
POLAR_M_EMBED = np.zeros((7, 6))
POLAR_M_EMBED[POLAR_M_INDEX, np.arange(6)] = 1.0


def numerical_jacobian(fun, x, step=FD_STEP):
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = step
        fp = np.atleast_1d(fun(x + dx))
        fm = np.atleast_1d(fun(x - dx))
        J[:, j] = (fp - fm) / (2.0 * step)
    return J


@dataclass(frozen=True)
class Output:
    """One measured output of a system.

    ``dim`` counts chart coordinates.  ``action`` is ``rho(X, y)`` for
    equivariant outputs and ``None`` otherwise; ``chart`` maps the output
    manifold to coordinates centred on ``h(origin)``.
    """

    name: str
    dim: int
    h: Callable
    action: Optional[Callable] = None
    chart: Optional[Callable] = None

    @property
    def equivariant(self):
        return self.action is not None


class SymmetrySystem:
    """Base class bundling the data of an equivariant system.

    Subclasses provide the group, origin, actions, vector field, lift, charts
    and outputs.  Differentials that are not overridden fall back to central
    finite differences.
    """

    name = "system"
    group = None
    state_dim = 0
    chart_dim = 0
    input_dim = 0

    def __init__(self):
        self.origin = np.zeros(self.state_dim)
        self.outputs = ()

    # -- core data -----------------------------------------------------
    def phi(self, X, xi):
        raise NotImplementedError

    def psi(self, X, u):
        raise NotImplementedError

    def f(self, xi, u):
        raise NotImplementedError

    def lift(self, xi, u):
        raise NotImplementedError

    def chart(self, xi):
        raise NotImplementedError

    def chart_inv(self, x):
        raise NotImplementedError

    def connection(self, v):
        """Connection function at the origin in chart coordinates."""
        return np.zeros((self.chart_dim, self.chart_dim))

    def normalize(self, xi):
        return xi

    # -- differentials -------------------------------------------------
    def dphi(self, xi):
        """Ambient matrix of ``Dphi_xi`` from algebra coordinates."""
        g = self.group
        cols = []
        for j in range(g.dim):
            e = np.zeros(g.dim)
            e[j] = 1.0
            cols.append(numerical_jacobian(lambda t: self.phi(g.exp(t[0] * e), xi), np.zeros(1))[:, 0])
        return np.column_stack(cols)

    def dphi_group(self, X):
        """Ambient Jacobian of ``xi -> phi(X, xi)`` (linear in every system here)."""
        return numerical_jacobian(lambda xi: self.phi(X, xi), self.origin)

    def psi_linear(self, X):
        """Linear part of ``u -> psi(X, u)``."""
        u0 = self.psi(X, np.zeros(self.input_dim))
        return numerical_jacobian(lambda u: self.psi(X, u) - u0, np.zeros(self.input_dim))

    def lift_state_jacobian(self, xi, u):
        return numerical_jacobian(lambda z: self.lift(z, u), xi)

    def lift_input_jacobian(self, xi, u):
        return numerical_jacobian(lambda w: self.lift(xi, w), u)

    def chart_inv_jacobian(self):
        """Ambient Jacobian of the inverse chart at zero."""
        return numerical_jacobian(self.chart_inv, np.zeros(self.chart_dim))

    def dphi_chart(self):
        """Chart-coordinate differential of the action at the origin (m x dim g)."""
        return np.linalg.pinv(self.chart_inv_jacobian()) @ self.dphi(self.origin)

    # -- random samples for property checks ----------------------------
    def random_state(self, rng):
        raise NotImplementedError

    def random_input(self, rng):
        return rng.normal(size=self.input_dim)

    def random_group(self, rng, scale=1.0):
        return self.group.random(rng, scale)


def pushforward(system, X, field, xi):
    """Push a vector field forward by ``phi_X`` and evaluate it at ``xi``."""
    g = system.group
    return system.dphi_group(X) @ field(system.phi(g.inverse(X), xi))


def dphi_origin(system, method="analytic", step=FD_STEP):
    """Differential of the action at the origin in chart coordinates.

    ``method="fd"`` differentiates ``chart(phi(exp(t e_j), origin))`` directly,
    which is the cross-check for the analytic matrices.  Raises
    :class:`RankDeficient` when the result does not have full row rank.
    """
    g = system.group
    if method == "analytic":
        D = np.asarray(system.dphi_chart(), dtype=float)
    elif method == "fd":
        cols = []
        for j in range(g.dim):
            e = np.zeros(g.dim)
            e[j] = 1.0
            col = numerical_jacobian(
                lambda t: system.chart(system.phi(g.exp(t[0] * e), system.origin)),
                np.zeros(1), step)
            cols.append(col[:, 0])
        D = np.column_stack(cols)
    else:
        raise ValueError(f"unknown method {method!r}")
    sv = np.linalg.svd(D, compute_uv=False)
    if sv.size < system.chart_dim or sv[system.chart_dim - 1] < RANK_TOL * max(1.0, sv[0]):
        raise RankDeficient(f"action differential of {system.name} has rank below {system.chart_dim}")
    return D


def dphi_pseudoinverse(system, D=None):
    """Moore-Penrose right inverse of :func:`dphi_origin`."""
    if D is None:
        D = dphi_origin(system)
    return np.linalg.pinv(D)


# -- sphere charts ------------------------------------------------------

def chart_sphere(eta):
    """Normal coordinates on S^2 about e3.

    Returns the ``omega`` in R^2 with ``exp((omega, 0)^x) e3 == eta``.
    """
    y1, y2, y3 = eta
    s = np.hypot(y1, y2)
    if s < 1e-9:
        if y3 < 0.0:
            raise AntipodePoint("point is antipodal to the chart centre")
        k = 1.0 / y3
    else:
        k = np.arctan2(s, y3) / s
    return np.array([-k * y2, k * y1])


def chart_sphere_inv(omega):
    w1, w2 = omega
    theta = np.hypot(w1, w2)
    sc = np.sinc(theta / np.pi)
    return np.array([w2 * sc, -w1 * sc, np.cos(theta)])


def tangent_basis(c):
    """Two orthonormal vectors spanning the tangent plane of S^2 at ``c``."""
    k = int(np.argmin(np.abs(c)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = e - (e @ c) * c
    t1 /= np.sqrt(t1 @ t1)
    return np.array([t1, cross(c, t1)])


def stereo_chart(eta, center, basis=None):
    """Stereographic coordinates of ``eta`` projected from ``-center``."""
    if basis is None:
        basis = tangent_basis(center)
    denom = 1.0 + center @ eta
    if denom < 1e-12:
        raise AntipodePoint("point is antipodal to the stereographic centre")
    return 2.0 * (basis @ eta) / denom


def stereo_chart_inv(s, center, basis=None):
    if basis is None:
        basis = tangent_basis(center)
    q = float(s @ s)
    return ((4.0 - q) * center + 4.0 * (basis.T @ s)) / (4.0 + q)


def stereo_chart_jacobian(eta, center, basis):
    """Ambient derivative (2 x 3) of :func:`stereo_chart` at ``eta``."""
    denom = 1.0 + center @ eta
    s = 2.0 * (basis @ eta) / denom
    return (2.0 * basis - np.outer(s, center)) / denom


def stereo_chart_inv_jacobian(s, center, basis):
    """Derivative (3 x 2) of :func:`stereo_chart_inv` at ``s``."""
    q = float(s @ s)
    eta = ((4.0 - q) * center + 4.0 * (basis.T @ s)) / (4.0 + q)
    return (4.0 * basis.T - 2.0 * np.outer(center + eta, s)) / (4.0 + q)


# -- polar connection --------------------------------------------------

def connection_polar(delta):
    """Half the adjoint of ``m(delta)`` restricted and projected onto the complement."""
    u = POLAR_M_EMBED @ np.asarray(delta, dtype=float)
    return 0.5 * pol_ad_matrix(u)[np.ix_(POLAR_M_INDEX, POLAR_M_INDEX)]


def connection_polar_oracle(delta):
    """Column-by-column bracket evaluation of :func:`connection_polar`."""
    u = POLAR_M_EMBED @ np.asarray(delta, dtype=float)
    G = np.empty((6, 6))
    for j in range(6):
        G[:, j] = 0.5 * pol_bracket(u, POLAR_M_EMBED[:, j])[POLAR_M_INDEX]
    return G
