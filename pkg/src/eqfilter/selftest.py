"""Randomised invariant checks for the groups, actions and systems.

Each check draws ``n`` random samples and reports the worst error against its
tolerance.  :func:`run_all` is what the ``selftest`` CLI subcommand executes.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import SymmetrySystem, numerical_jacobian, pushforward
from .lie_core import SO3, Galilean, Polar
from .systems import GalileanSystem, PolarSystem, SphereSystem

TOL = 1e-8
FD_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    target: str
    samples: int
    max_error: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<24} {self.target:<9} n={self.samples:<5d} "
                f"max_err={self.max_error:.3e} tol={self.tol:.0e}")


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def systems():
    return (SphereSystem(), GalileanSystem(), PolarSystem())


def check_group_axioms(group, rng, n=1000, tol=TOL):
    worst = 0.0
    e = group.identity()
    for _ in range(n):
        a, b, c = (group.random(rng, 1.0) for _ in range(3))
        M = group.as_matrix
        worst = max(worst,
                    _rel(M(group.compose(group.compose(a, b), c)),
                         M(group.compose(a, group.compose(b, c)))),
                    _rel(M(group.compose(e, a)), M(a)),
                    _rel(M(group.compose(a, e)), M(a)),
                    _rel(M(group.compose(a, group.inverse(a))), M(e)))
    return CheckResult("group_axioms", group.__name__, n, worst, tol)


def check_action_law(system, rng, n=1000, tol=TOL):
    g = system.group
    worst = 0.0
    for _ in range(n):
        xi = system.random_state(rng)
        X, Y = system.random_group(rng), system.random_group(rng)
        worst = max(worst,
                    _rel(system.phi(X, system.phi(Y, xi)), system.phi(g.compose(Y, X), xi)),
                    _rel(system.phi(g.identity(), xi), xi))
    return CheckResult("action_law", system.name, n, worst, tol)


def check_pushforward(system, rng, n=1000, tol=FD_TOL):
    """Analytic push-forward against a finite difference of ``phi_X`` along the field."""
    g = system.group
    worst = 0.0
    for _ in range(n):
        xi = system.random_state(rng)
        u = system.random_input(rng)
        X = system.random_group(rng)
        field = lambda z: system.f(z, u)  # noqa: E731
        pf = pushforward(system, X, field, xi)
        base = system.phi(g.inverse(X), xi)
        v = field(base)
        fd = numerical_jacobian(lambda s: system.phi(X, base + s[0] * v), np.zeros(1))[:, 0]
        worst = max(worst, _rel(pf, fd))
    return CheckResult("pushforward", system.name, n, worst, tol)


def check_system_equivariance(system, rng, n=1000, tol=TOL):
    worst = 0.0
    for _ in range(n):
        xi = system.random_state(rng)
        u = system.random_input(rng)
        X = system.random_group(rng)
        worst = max(worst, _rel(system.dphi_group(X) @ system.f(xi, u),
                                system.f(system.phi(X, xi), system.psi(X, u))))
    return CheckResult("system_equivariance", system.name, n, worst, tol)


def check_output_equivariance(system, rng, n=1000, tol=TOL):
    worst = 0.0
    outs = [o for o in system.outputs if o.equivariant]
    for _ in range(n):
        xi = system.random_state(rng)
        X = system.random_group(rng)
        for o in outs:
            worst = max(worst, _rel(o.action(X, o.h(xi)), o.h(system.phi(X, xi))))
    return CheckResult("output_equivariance", system.name, n, worst, tol)


def check_lift_preimage(system, rng, n=1000, tol=TOL):
    worst = 0.0
    for _ in range(n):
        xi = system.random_state(rng)
        u = system.random_input(rng)
        worst = max(worst, _rel(system.dphi(xi) @ system.lift(xi, u), system.f(xi, u)))
    return CheckResult("lift_preimage", system.name, n, worst, tol)


def check_lift_equivariance(system, rng, n=1000, tol=TOL):
    g = system.group
    worst = 0.0
    for _ in range(n):
        xi = system.random_state(rng)
        u = system.random_input(rng)
        X = system.random_group(rng)
        worst = max(worst, _rel(g.adjoint(g.inverse(X), system.lift(xi, u)),
                                system.lift(system.phi(X, xi), system.psi(X, u))))
    return CheckResult("lift_equivariance", system.name, n, worst, tol)


def check_commuting_diagram(system, rng, n=1000, tol=FD_TOL):
    """``Dphi_{phi_X(origin)} Ad_{X^-1} == Dphi_X Dphi_origin`` with FD differentials."""
    g = system.group
    worst = 0.0
    D0 = SymmetrySystem.dphi(system, system.origin)
    for _ in range(n):
        X = system.random_group(rng)
        lhs = SymmetrySystem.dphi(system, system.phi(X, system.origin)) @ g.adjoint_matrix(g.inverse(X))
        rhs = SymmetrySystem.dphi_group(system, X) @ D0
        worst = max(worst, _rel(lhs, rhs))
    return CheckResult("commuting_diagram", system.name, n, worst, tol)


def check_innovation_identity(system, rng, n=1000, tol=TOL):
    """Noiseless ``rho(X^-1, h(xi))`` equals ``h(e)`` with ``e = phi(X^-1, xi)``."""
    g = system.group
    worst = 0.0
    outs = [o for o in system.outputs if o.equivariant]
    for _ in range(n):
        xi = system.random_state(rng)
        X = system.random_group(rng)
        Xi = g.inverse(X)
        e = system.phi(Xi, xi)
        for o in outs:
            worst = max(worst, _rel(o.action(Xi, o.h(xi)), o.h(e)))
    return CheckResult("innovation_identity", system.name, n, worst, tol)


SYSTEM_CHECKS = (
    check_action_law,
    check_pushforward,
    check_system_equivariance,
    check_output_equivariance,
    check_lift_preimage,
    check_lift_equivariance,
    check_commuting_diagram,
    check_innovation_identity,
)


def run_all(n=1000, seed=12345):
    rng = np.random.default_rng(seed)
    results = [check_group_axioms(G, rng, n) for G in (SO3, Galilean, Polar)]
    for system in systems():
        for check in SYSTEM_CHECKS:
            results.append(check(system, rng, n))
    return results
