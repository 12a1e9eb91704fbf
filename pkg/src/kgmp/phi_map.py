"""The auxiliary map ``Phi``, its differential, and the functional ``Psi``.

``Phi(u)`` is the unique solution of

    Delta_g Phi + (m1^2 + q^2 u^2) Phi = q u^2,

which eliminates the electric potential ``v`` from the coupled system. It
satisfies ``0 <= Phi(u) <= 1/q``. With it,

    Psi(u)   = 1/2 int (1 - q Phi(u)) u^2
    DPsi(u).phi = int (1 - q Phi(u))^2 u phi.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .elliptic import DEFAULT_TOL, dirichlet, l2_inner, screened_solve
from .manifold import Discretization

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicsParams:
    """``q`` charge, ``m0`` particle mass, ``m1`` Proca mass, ``omega`` phase, ``p`` exponent."""
    q: float = 1.0
    m0: float = 1.0
    m1: float = 1.0
    omega: float = 0.0
    p: float = 4.0

    def __post_init__(self):
        for name in ("q", "m0", "m1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.omega**2 < self.m0**2:
            raise ValueError(f"need omega^2 < m0^2, got omega={self.omega}, m0={self.m0}")
        if not 2 < self.p <= 4:
            raise ValueError(f"exponent p must lie in (2, 4], got {self.p}")

    @property
    def lam(self) -> float:
        """``m0^2 - omega^2``."""
        return self.m0**2 - self.omega**2


def phi(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL, x0=None) -> np.ndarray:
    """``Phi(u)``; with a warm start ``x0`` only the correction ``Phi(u) - x0`` is solved for,
    so the tolerance is relative to the residual of ``x0``."""
    u = d.check(u)
    q = params.q
    if not np.any(u):
        return np.zeros(d.shape)
    u2 = u * u
    V = params.m1**2 + q * q * u2
    if x0 is None:
        out = screened_solve(d, V, q * u2, tol=tol).solution
    else:
        # solve for the correction so the tolerance applies to the warm start's residual
        x0 = d.check(x0)
        out = x0 + screened_solve(d, V, q * u2 - d.laplacian(x0) - V * x0, tol=tol).solution
    lo, hi = float(out.min()), float(out.max())
    if lo < -1e-8 or hi > 1.0 / q + 1e-8:
        log.warning("Phi(u) left [0, 1/q]: min %.3e, max - 1/q %.3e", lo, hi - 1.0 / q)
    return out


def dphi(d: Discretization, params: PhysicsParams, u, direction, tol: float = DEFAULT_TOL,
         phi_u=None) -> np.ndarray:
    """``V_u(phi)``: solves ``(Delta_g + m1^2 + q^2 u^2) V = 2 q u (1 - q Phi(u)) phi``."""
    u = d.check(u)
    direction = d.check(direction)
    q = params.q
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    rhs = 2 * q * u * (1 - q * phi_u) * direction
    return screened_solve(d, params.m1**2 + q * q * u * u, rhs, tol=tol).solution


def psi(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL, phi_u=None) -> float:
    u = d.check(u)
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    return 0.5 * d.integrate((1 - params.q * phi_u) * u * u)


def dpsi(d: Discretization, params: PhysicsParams, u, direction, tol: float = DEFAULT_TOL,
         phi_u=None) -> float:
    u = d.check(u)
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    return l2_inner(d, (1 - params.q * phi_u) ** 2 * u, direction)


def psi_energy_form(d: Discretization, params: PhysicsParams, u, tol: float = DEFAULT_TOL,
                    phi_u=None) -> float:
    """``Psi`` rewritten through the equation for ``Phi``:

    1/2 int (|grad Phi|^2 + m1^2 Phi^2) + 1/2 int (1 - q Phi)^2 u^2.
    """
    u = d.check(u)
    if phi_u is None:
        phi_u = phi(d, params, u, tol)
    field_part = dirichlet(d, phi_u) + params.m1**2 * l2_inner(d, phi_u, phi_u)
    return 0.5 * field_part + 0.5 * d.integrate((1 - params.q * phi_u) ** 2 * u * u)
