"""Finite-difference and bound checks for Phi, Psi and I_p on random fields.

Every check returns a :class:`CheckRow`; the CLI ``gradcheck`` command and
the test suite both run these. Orders are two-point slopes
``log2(err(h) / err(h/2))``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .elliptic import h1_norm, l2_inner
from .functional import Ip, energy_S, grad_Ip
from .manifold import Discretization, random_smooth_field
from .phi_map import PhysicsParams, dphi, dpsi, phi, psi, psi_energy_form

MIN_ORDER = 1.8
BOUND_SLACK = 1e-8
PSI_RTOL = 1e-7
REDUCTION_RTOL = 1e-7
STEPS = (1e-3, 5e-4)


@dataclass(frozen=True)
class CheckRow:
    check: str
    manifold: str
    sample: int
    value: float
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def observed_order(errors, floor: float = 0.0) -> float:
    """Two-point slope; errors at or below ``floor`` (rounding of the difference
    quotient) count as exact agreement and give ``inf``."""
    e1, e2 = errors
    if max(e1, e2) <= floor:
        return np.inf
    if e2 == 0.0:
        return np.inf if e1 == 0.0 else -np.inf
    return float(np.log2(e1 / e2))


def random_pair(d: Discretization, rng: np.random.Generator, positive: bool = True):
    """A random field ``u`` (bounded away from 0 when ``positive``) and a direction.

    The direction has a positive mean so the third directional derivative, which
    sets the O(h^2) error, stays well above the roundoff floor of the energy.
    """
    u = random_smooth_field(d, rng, amplitude=0.6, offset=1.5 if positive else 0.0)
    direction = random_smooth_field(d, rng, amplitude=0.5, offset=1.0)
    return u, direction


def _central_order(f, u, direction, exact, steps) -> float:
    errs, floor = [], 0.0
    for h in steps:
        a, b = f(u + h * direction), f(u - h * direction)
        errs.append(abs((a - b) / (2 * h) - exact))
        floor = max(floor, 16 * np.finfo(float).eps * (abs(a) + abs(b)) / (2 * h))
    return observed_order(errs, floor)


def grad_order(d, params, u, direction, steps=STEPS, tol=1e-11) -> float:
    """Order of ``|(I(u+h phi) - I(u-h phi))/2h - <grad I(u), phi>|`` in ``h``."""
    ph = phi(d, params, u, tol)
    exact = l2_inner(d, grad_Ip(d, params, u, tol, ph), direction)

    def energy(w):
        return Ip(d, params, w, tol, phi(d, params, w, tol, x0=ph))

    return _central_order(energy, u, direction, exact, steps)


def dphi_order(d, params, u, direction, steps=STEPS, tol=1e-11) -> float:
    """Order of ``||Phi(u+h phi) - Phi(u) - h V_u(phi)||_{H^1}`` in ``h``."""
    ph = phi(d, params, u, tol)
    lin = dphi(d, params, u, direction, tol, phi_u=ph)
    errs = [h1_norm(d, phi(d, params, u + h * direction, tol, x0=ph) - ph - h * lin) for h in steps]
    return observed_order(errs)


def dpsi_order(d, params, u, direction, steps=STEPS, tol=1e-11) -> float:
    ph = phi(d, params, u, tol)
    exact = dpsi(d, params, u, direction, tol, ph)

    def value(w):
        return psi(d, params, w, tol, phi(d, params, w, tol, x0=ph))

    return _central_order(value, u, direction, exact, steps)


def psi_forms_gap(d, params, u, tol=1e-11) -> float:
    ph = phi(d, params, u, tol)
    a = psi(d, params, u, tol, phi_u=ph)
    b = psi_energy_form(d, params, u, tol, phi_u=ph)
    return abs(a - b) / max(abs(a), 1e-300)


def reduction_gap(d, params, u, tol=1e-11) -> float:
    """Relative gap ``|S(u, Phi(u)) - I_p(u)| / |I_p(u)|``."""
    ph = phi(d, params, u, tol)
    a = energy_S(d, params, u, ph)
    b = Ip(d, params, u, tol, phi_u=ph)
    return abs(a - b) / max(abs(b), 1e-300)


def phi_suite(d: Discretization, params: PhysicsParams, rng: np.random.Generator, n_fields: int = 100,
              n_derivative: int = 5) -> list[CheckRow]:
    """Bounds of ``Phi`` and agreement of the two ``Psi`` forms on ``n_fields``
    random fields; ``DPhi``/``DPsi`` orders on the first ``n_derivative`` of them."""
    rows = []
    hi = 1.0 / params.q + BOUND_SLACK
    for i in range(n_fields):
        u = random_smooth_field(d, rng, amplitude=2.0)
        ph = phi(d, params, u)
        lo_val, hi_val = float(ph.min()), float(ph.max())
        rows.append(CheckRow("phi_lower", d.kind, i, lo_val, lo_val >= -BOUND_SLACK))
        rows.append(CheckRow("phi_upper", d.kind, i, hi_val, hi_val <= hi))
        gap = psi_forms_gap(d, params, u)
        rows.append(CheckRow("psi_forms", d.kind, i, gap, gap <= PSI_RTOL))
        if i < n_derivative:
            direction = random_smooth_field(d, rng, amplitude=0.5, offset=1.0)
            o = dphi_order(d, params, u, direction)
            rows.append(CheckRow("dphi_order", d.kind, i, o, o >= MIN_ORDER))
            o = dpsi_order(d, params, u, direction)
            rows.append(CheckRow("dpsi_order", d.kind, i, o, o >= MIN_ORDER))
    return rows


def gradient_suite(d: Discretization, params: PhysicsParams, rng: np.random.Generator, n_pairs: int = 20,
                   p_values=(2.5, 3.0, 4.0)) -> list[CheckRow]:
    rows = []
    for p in p_values:
        pp = PhysicsParams(params.q, params.m0, params.m1, params.omega, p)
        for i in range(n_pairs):
            u, direction = random_pair(d, rng)
            o = grad_order(d, pp, u, direction)
            rows.append(CheckRow(f"grad_order_p{p:g}", d.kind, i, o, o >= MIN_ORDER))
    return rows


def reduction_suite(d: Discretization, params: PhysicsParams, rng: np.random.Generator,
                    n_fields: int = 20) -> list[CheckRow]:
    rows = []
    for i in range(n_fields):
        u = np.abs(random_smooth_field(d, rng, amplitude=1.5))
        gap = reduction_gap(d, params, u)
        rows.append(CheckRow("reduction", d.kind, i, gap, gap <= REDUCTION_RTOL))
    return rows


def lipschitz_ratio(d: Discretization, params: PhysicsParams, u, w, tol=1e-11) -> float:
    """``||Phi(w) - Phi(u)||_{H^1} / ((||u||_{H^1} + ||w||_{H^1}) ||w - u||_{H^1})``."""
    den = (h1_norm(d, u) + h1_norm(d, w)) * h1_norm(d, w - u)
    if den == 0:
        raise ZeroDivisionError("lipschitz_ratio needs u != w")
    return h1_norm(d, phi(d, params, w, tol) - phi(d, params, u, tol)) / den


def lipschitz_sample_max(d: Discretization, params: PhysicsParams, rng: np.random.Generator,
                         n_pairs: int = 100) -> float:
    return max(lipschitz_ratio(d, params, random_smooth_field(d, rng), random_smooth_field(d, rng))
               for _ in range(n_pairs))
