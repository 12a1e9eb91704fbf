"""Energies, gradients and residuals.

    I_p(u) = 1/2 int |grad u|^2 + m0^2/2 int u^2 - 1/p int (u+)^p
             - omega^2/2 int (1 - q Phi(u)) u^2

``grad_Ip`` is the L^2 gradient (w.r.t. the quadrature inner product), i.e.
the left side of the Euler-Lagrange equation

    Delta_g u + m0^2 u - (u+)^(p-1) - omega^2 (1 - q Phi(u))^2 u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import DEFAULT_TOL, dirichlet, l2_inner, l2_norm
from .manifold import Discretization
from .phi_map import PhysicsParams, phi


def positive_power(u, e: float) -> np.ndarray:
    """``(u+)^e`` with ``0`` mapped to ``0`` (no NaN for negative bases)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(e * np.log(u[pos]))
    return out


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    mass: float
    power: float
    coupling: float

    @property
    def total(self) -> float:
        return self.kinetic + self.mass + self.power + self.coupling


def energy_Ip(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL,
              phi_u=None) -> EnergyBreakdown:
    u = d.check(u)
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    p = params.p
    return EnergyBreakdown(
        kinetic=0.5 * dirichlet(d, u),
        mass=0.5 * params.m0**2 * l2_inner(d, u, u),
        power=-d.integrate(positive_power(u, p)) / p,
        coupling=-0.5 * params.omega**2 * d.integrate((1 - params.q * phi_u) * u * u),
    )


def Ip(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL, phi_u=None) -> float:
    return energy_Ip(d, params, u, tol, phi_u).total


def grad_Ip(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL,
            phi_u=None) -> np.ndarray:
    u = d.check(u)
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    return (d.laplacian(u) + params.m0**2 * u - positive_power(u, params.p - 1)
            - params.omega**2 * (1 - params.q * phi_u) ** 2 * u)


def energy_S(d: Discretization, params: PhysicsParams, u, v) -> float:
    """The strongly indefinite functional of the coupled system in ``(u, v)``.

    ``int u^p`` is taken as ``int |u|^p`` for non-integer ``p``; the reduction
    ``S(u, Phi(u)) = I_p(u)`` is meant for ``u >= 0``.
    """
    u = d.check(u)
    v = d.check(v)
    w2 = params.omega**2
    p = params.p
    up = u**p if float(p).is_integer() else np.abs(u) ** p
    return (0.5 * dirichlet(d, u) - 0.5 * w2 * dirichlet(d, v)
            + 0.5 * params.m0**2 * l2_inner(d, u, u)
            - 0.5 * w2 * params.m1**2 * l2_inner(d, v, v)
            - d.integrate(up) / p
            - 0.5 * w2 * d.integrate(u * u * (1 - params.q * v) ** 2))


def energy_F4(d: Discretization, u, lam: float) -> float:
    """Model critical functional ``1/2 int |grad u|^2 + lam/2 int u^2 - 1/4 int u^4``."""
    u = d.check(u)
    return 0.5 * dirichlet(d, u) + 0.5 * lam * l2_inner(d, u, u) - 0.25 * d.integrate(u**4)


def rayleigh_J(d: Discretization, u, lam: float) -> float:
    """``(int |grad u|^2 + lam u^2) / (int u^4)^(1/2)``."""
    u = d.check(u)
    denom = d.integrate(u**4)
    if not denom > 0:
        raise ZeroDivisionError("rayleigh_J of the zero field")
    return (dirichlet(d, u) + lam * l2_inner(d, u, u)) / np.sqrt(denom)


def system_residual(d: Discretization, params: PhysicsParams, u, v,
                    omega_sq: float | None = None) -> tuple[float, float]:
    """L^2 norms of the residuals of both equations of the coupled system.

    ``omega_sq`` overrides ``params.omega**2`` (the degenerate family reaches
    ``omega^2 >= m0^2``, outside the validated parameter range).
    """
    u = d.check(u)
    v = d.check(v)
    w2 = params.omega**2 if omega_sq is None else omega_sq
    q = params.q
    p = params.p
    up1 = u ** (p - 1) if float(p).is_integer() else positive_power(u, p - 1)
    r1 = d.laplacian(u) + params.m0**2 * u - up1 - w2 * (q * v - 1) ** 2 * u
    r2 = d.laplacian(v) + (params.m1**2 + q * q * u * u) * v - q * u * u
    return l2_norm(d, r1), l2_norm(d, r2)
