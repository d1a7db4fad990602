"""The three matrix Lie groups used by the filters.

* ``SO3``      rotations, stored as 3x3 matrices, algebra coordinates in R^3.
* ``Galilean`` R^3 x R^3 under addition, algebra coordinates in R^6.
* ``Polar``    (SO(3) x MR(1)) |x R^3 with elements ``Pol(R, r, beta)`` and
               algebra coordinates ordered (W1, W2, W3, lambda, b1, b2, b3).

The group namespaces share one small interface (``identity``, ``compose``,
``inverse``, ``exp``, ``adjoint``, ``bracket``, ``random``) so the filter code
can stay generic.  The free functions (``so3_exp``, ``pol_compose`` and
friends) are thin and can be used directly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AngleNearPi

SMALL_ANGLE = 1e-6
ORTHO_TOL = 1e-9

# Gauss-Legendre rule on [0, 1] for the translational block of the polar exponential.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_S = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def skew(w):
    """Return the 3x3 matrix ``w^x`` with ``skew(w) @ v == cross(w, v)``."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def cross(a, b):
    # np.cross carries a lot of overhead for single 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def so3_exp(w):
    """Rodrigues formula for ``exp(w^x)``."""
    w = np.asarray(w, dtype=float)
    theta2 = float(w @ w)
    theta = np.sqrt(theta2)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    W = skew(w)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R):
    """Inverse of :func:`so3_exp` for rotation angles strictly below pi.

    Raises :class:`AngleNearPi` when ``trace(R) <= -1 + 1e-9``.
    """
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr <= -1.0 + 1e-9:
        raise AngleNearPi(f"rotation angle too close to pi (trace={tr:.12g})")
    axis2 = vee(R - R.T)  # 2 sin(theta) * axis
    s = 0.5 * np.sqrt(float(axis2 @ axis2))
    c = 0.5 * (tr - 1.0)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        k = 0.5 * (1.0 + theta * theta / 6.0)
    else:
        k = 0.5 * theta / np.sin(theta)
    return k * axis2


def orthonormalize(R):
    """Project ``R`` onto SO(3) when it has drifted by more than ``ORTHO_TOL``."""
    err = R.T @ R - np.eye(3)
    if np.sqrt(np.sum(err * err)) <= ORTHO_TOL:
        return R
    u, _, vt = np.linalg.svd(R)
    Rn = u @ vt
    if np.linalg.det(Rn) < 0:
        u[:, -1] *= -1.0
        Rn = u @ vt
    return Rn


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))


class SO3:
    """Rotation group acting through 3x3 matrices."""

    dim = 3

    @staticmethod
    def identity():
        return np.eye(3)

    @staticmethod
    def compose(a, b):
        return a @ b

    @staticmethod
    def inverse(a):
        return a.T

    @staticmethod
    def exp(u):
        return so3_exp(u)

    @staticmethod
    def log(X):
        return so3_log(X)

    @staticmethod
    def adjoint(X, u):
        return X @ u

    @staticmethod
    def adjoint_matrix(X):
        return X.copy()

    @staticmethod
    def bracket(u, v):
        return cross(u, v)

    @staticmethod
    def normalize(X):
        return orthonormalize(X)

    @staticmethod
    def random(rng, scale=1.0):
        return random_rotation(rng, max_angle=min(np.pi, 3.0 * scale))

    @staticmethod
    def as_matrix(X):
        return X

    @staticmethod
    def algebra_matrix(u):
        return skew(u)

    @staticmethod
    def distance(a, b):
        return float(np.max(np.abs(a - b)))


class Galilean:
    """R^3 x R^3 under addition; elements and algebra are both 6-vectors (alpha, beta)."""

    dim = 6

    @staticmethod
    def identity():
        return np.zeros(6)

    @staticmethod
    def compose(a, b):
        return a + b

    @staticmethod
    def inverse(a):
        return -a

    @staticmethod
    def exp(u):
        return np.array(u, dtype=float)

    @staticmethod
    def log(X):
        return np.array(X, dtype=float)

    @staticmethod
    def adjoint(X, u):
        return np.array(u, dtype=float)

    @staticmethod
    def adjoint_matrix(X):
        return np.eye(6)

    @staticmethod
    def bracket(u, v):
        return np.zeros(6)

    @staticmethod
    def normalize(X):
        return X

    @staticmethod
    def random(rng, scale=1.0):
        return rng.normal(scale=scale, size=6)

    @staticmethod
    def as_matrix(X):
        """Faithful 7x7 representation [[I, X], [0, 1]]."""
        M = np.eye(7)
        M[:6, 6] = X
        return M

    @staticmethod
    def algebra_matrix(u):
        M = np.zeros((7, 7))
        M[:6, 6] = u
        return M

    @staticmethod
    def distance(a, b):
        return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class Pol:
    """Element (R, r, beta) of the polar group."""

    R: np.ndarray
    r: float
    beta: np.ndarray

    def __matmul__(self, other):
        return pol_compose(self, other)


def pol_identity():
    return Pol(np.eye(3), 1.0, np.zeros(3))


def pol_compose(X2, X1):
    """Group product ``X2 X1 = (R2 R1, r2 r1, beta2 + r2 R2 beta1)``."""
    return Pol(X2.R @ X1.R, X2.r * X1.r, X2.beta + X2.r * (X2.R @ X1.beta))


def pol_inverse(X):
    Rt = X.R.T
    return Pol(Rt, 1.0 / X.r, -(Rt @ X.beta) / X.r)


def pol_as_matrix(X):
    """Faithful 4x4 representation [[r R, beta], [0, 1]]."""
    M = np.eye(4)
    M[:3, :3] = X.r * X.R
    M[:3, 3] = X.beta
    return M


def pol_from_matrix(M):
    A = M[:3, :3]
    r = np.cbrt(np.linalg.det(A))
    return Pol(orthonormalize(A / r), float(r), M[:3, 3].copy())


def pol_algebra_matrix(u):
    M = np.zeros((4, 4))
    M[:3, :3] = skew(u[:3]) + u[3] * np.eye(3)
    M[:3, 3] = u[4:7]
    return M


def pol_algebra_from_matrix(M):
    lam = np.trace(M[:3, :3]) / 3.0
    return np.concatenate([vee(M[:3, :3]), [lam], M[:3, 3]])


def pol_translation_matrix(W, lam):
    """``int_0^1 exp(s lam) exp(s W^x) ds`` as a 3x3 matrix.

    Scalar coefficients are integrated with a 24-point Gauss-Legendre rule on
    sinc-form integrands, which stay well conditioned as ``|W|`` and ``lam`` go
    to zero.
    """
    theta = np.sqrt(float(W @ W))
    e = np.exp(_GL_S * lam)
    x = _GL_S * theta
    sinc1 = np.sinc(x / np.pi)
    sinc2 = np.sinc(x / (2.0 * np.pi))
    c0 = float(_GL_W @ e)
    c1 = float(_GL_W @ (e * _GL_S * sinc1))
    c2 = float(_GL_W @ (e * 0.5 * _GL_S * _GL_S * sinc2 * sinc2))
    K = skew(W)
    return c0 * np.eye(3) + c1 * K + c2 * (K @ K)


def pol_exp(u):
    u = np.asarray(u, dtype=float)
    W = u[:3]
    lam = u[3]
    V = pol_translation_matrix(W, lam)
    return Pol(so3_exp(W), float(np.exp(lam)), V @ u[4:7])


def pol_adjoint(X, u):
    """``Ad_X u = X u X^-1`` in algebra coordinates."""
    u = np.asarray(u, dtype=float)
    RW = X.R @ u[:3]
    lam = u[3]
    b = X.r * (X.R @ u[4:7]) - cross(RW, X.beta) - lam * X.beta
    return np.concatenate([RW, [lam], b])


def pol_adjoint_matrix(X):
    A = np.zeros((7, 7))
    A[:3, :3] = X.R
    A[3, 3] = 1.0
    A[4:7, :3] = skew(X.beta) @ X.R
    A[4:7, 3] = -X.beta
    A[4:7, 4:7] = X.r * X.R
    return A


def pol_bracket(u, v):
    """Lie bracket, equal to the commutator in the 4x4 representation."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    W = cross(u[:3], v[:3])
    b = cross(u[:3], v[4:7]) - cross(v[:3], u[4:7]) + u[3] * v[4:7] - v[3] * u[4:7]
    return np.concatenate([W, [0.0], b])


def pol_ad_matrix(u):
    """Matrix of ``v -> [u, v]``."""
    u = np.asarray(u, dtype=float)
    A = np.zeros((7, 7))
    A[:3, :3] = skew(u[:3])
    A[4:7, :3] = skew(u[4:7])
    A[4:7, 3] = -u[4:7]
    A[4:7, 4:7] = skew(u[:3]) + u[3] * np.eye(3)
    return A


class Polar:
    """The polar group (SO(3) x MR(1)) |x R^3."""

    dim = 7

    @staticmethod
    def identity():
        return pol_identity()

    @staticmethod
    def compose(a, b):
        return pol_compose(a, b)

    @staticmethod
    def inverse(a):
        return pol_inverse(a)

    @staticmethod
    def exp(u):
        return pol_exp(u)

    @staticmethod
    def adjoint(X, u):
        return pol_adjoint(X, u)

    @staticmethod
    def adjoint_matrix(X):
        return pol_adjoint_matrix(X)

    @staticmethod
    def bracket(u, v):
        return pol_bracket(u, v)

    @staticmethod
    def normalize(X):
        R = orthonormalize(X.R)
        if R is X.R:
            return X
        return Pol(R, X.r, X.beta)

    @staticmethod
    def random(rng, scale=1.0):
        u = rng.normal(scale=scale, size=7)
        return pol_exp(u)

    @staticmethod
    def as_matrix(X):
        return pol_as_matrix(X)

    @staticmethod
    def algebra_matrix(u):
        return pol_algebra_matrix(u)

    @staticmethod
    def distance(a, b):
        return float(np.max(np.abs(pol_as_matrix(a) - pol_as_matrix(b))))
