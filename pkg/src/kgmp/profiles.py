"""Bubbles, truncated test functions and the sharp constants they realize.

The flat bubble ``U(x) = (1 + |x|^2/8)^{-1}`` solves ``Delta U = U^3`` on R^4
(geometer's sign), and ``U_mu(x) = mu / (mu^2 + |x|^2/8)`` is its rescaling
with ``max U_mu = 1/mu``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import Discretization

OMEGA3 = 2.0 * np.pi**2
BUBBLE_INTEGRAL = 32.0 * np.pi**2 / 3.0  # int_{R^4} U^4 = int_{R^4} |grad U|^2


@dataclass(frozen=True)
class Constants:
    omega3: float = OMEGA3
    bubble_mass: float = BUBBLE_INTEGRAL
    bubble_dirichlet: float = BUBBLE_INTEGRAL

    @property
    def inv_K4_sq(self) -> float:
        """``1/K4^2 = int |grad U|^2 / (int U^4)^(1/2)``, the optimal Sobolev quotient."""
        return self.bubble_dirichlet / np.sqrt(self.bubble_mass)

    @property
    def K4_sq(self) -> float:
        return 1.0 / self.inv_K4_sq

    @property
    def mp_threshold(self) -> float:
        """``1/(4 K4^4)``: mountain-pass energies below it stay compact."""
        return 0.25 * self.inv_K4_sq**2

    def as_dict(self) -> dict:
        return {
            "omega3": self.omega3,
            "bubble_mass": self.bubble_mass,
            "bubble_dirichlet": self.bubble_dirichlet,
            "K4_sq": self.K4_sq,
            "inv_K4_sq": self.inv_K4_sq,
            "mp_threshold": self.mp_threshold,
        }


CONSTANTS = Constants()


def bubble_profile(s, mu: float = 1.0):
    s = np.asarray(s, dtype=float)
    return mu / (mu * mu + s * s / 8.0)


def bubble_flat(mu: float, r) -> np.ndarray:
    """Samples of ``U_mu`` at radii ``r`` (a flat radial grid or any distance array)."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return bubble_profile(r, mu)


def bubble_residual(r) -> float:
    """``max |Delta U - U^3|`` over interior nodes, flat radial Laplacian
    ``-u'' - (3/r) u'`` by second-order central differences on the uniform grid ``r``."""
    r = np.asarray(r, dtype=float)
    h = r[1] - r[0]
    U = bubble_profile(r)
    d2 = (U[2:] - 2 * U[1:-1] + U[:-2]) / h**2
    d1 = (U[2:] - U[:-2]) / (2 * h)
    lap = -d2 - 3.0 / r[1:-1] * d1
    return float(np.max(np.abs(lap - U[1:-1] ** 3)))


def test_function(d: Discretization, eps: float, rho0: float | None = None, distance=None) -> np.ndarray:
    """Truncated bubble ``eps/(eps^2 + r^2) - eps/(eps^2 + rho0^2)`` for ``r <= rho0``, else 0.

    ``r`` is the geodesic distance to the base point (``d.distance``) unless an
    explicit distance array is supplied.
    """
    if rho0 is None:
        rho0 = default_rho0(d)
    if not 0 < eps < rho0:
        raise ValueError(f"need 0 < eps < rho0, got eps={eps}, rho0={rho0}")
    if rho0 > d.injectivity_radius:
        raise ValueError(f"rho0={rho0} exceeds the injectivity radius {d.injectivity_radius}")
    r = d.distance if distance is None else np.asarray(distance, dtype=float)
    u = eps / (eps**2 + r**2) - eps / (eps**2 + rho0**2)
    return np.where(r < rho0, u, 0.0)


def default_rho0(d: Discretization) -> float:
    if d.kind == "torus4":
        return min(d.spec.lengths) / 4.0
    if d.kind == "sphere4_radial":
        return 1.0 * d.spec.radius
    return d.injectivity_radius / 2.0
