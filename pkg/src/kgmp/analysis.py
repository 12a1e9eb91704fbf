"""Experiments around the reduced problem: sharp-constant checks, test-function
expansions, constant and degenerate solution branches, phase sweeps and
blow-up diagnostics.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .elliptic import SolverError, dirichlet
from .functional import rayleigh_J
from .manifold import Discretization, FlatRadial4, build_manifold
from .mountain_pass import BlowUpError, MPASettings, MPTResult, mpa_solve, select_seed
from .phi_map import PhysicsParams
from .profiles import (CONSTANTS, Constants, bubble_flat, bubble_profile, bubble_residual,
                       default_rho0, test_function)

log = logging.getLogger(__name__)

__all__ = [
    "CONSTANTS", "Constants", "bubble_flat", "bubble_residual", "test_function",
    "bubble_quotient_estimate", "expansion_check", "ExpansionRecord", "constant_branch",
    "degenerate_family", "threshold_mask", "phase_sweep", "SweepRow", "SweepReport",
    "blowup_diagnostics", "BlowupRecord",
]


def bubble_quotient_estimate(r_max: float = 40.0, nodes: int = 20001) -> tuple[float, float]:
    """Minimize the Sobolev quotient ``J_0`` over bubbles ``U_mu - U_mu(r_max)``
    vanishing on the boundary of a flat ball (so every member is admissible
    for the R^4 Sobolev inequality). Returns ``(min J_0, argmin mu)``.

    The infimum is approached as ``mu/r_max -> 0``; ``mu`` is kept above 20
    grid spacings so the profile stays resolved.
    """
    d = build_manifold(FlatRadial4(r_max, nodes))
    r = d.coords[0]
    h = r[1] - r[0]

    def J(mu):
        return rayleigh_J(d, bubble_flat(mu, r) - bubble_profile(r_max, mu), 0.0)

    res = minimize_scalar(J, bounds=(20 * h, r_max / 8), method="bounded",
                          options={"xatol": 1e-6})
    return float(res.fun), float(res.x)


@dataclass
class ExpansionRecord:
    eps: list
    J_values: list
    coef_log: float      # coefficient of eps^2 ln eps in J K4^2 - 1
    coef_sq: float       # coefficient of eps^2
    intercept: float
    limit_estimate: float
    slope_sign: int
    gradient_mass_ratio: float


def expansion_check(d: Discretization, lam: float, eps_list, rho0: float | None = None) -> ExpansionRecord:
    """``J_lam(u_eps)`` along decreasing ``eps`` and its small-``eps`` fit.

    ``J K4^2 - 1`` is fitted by least squares to ``a + b eps^2 ln eps + c eps^2``;
    the ``eps^2`` column absorbs the truncation terms, which at moderate ``eps``
    are as large as the logarithmic one. ``slope_sign`` is the sign of ``b``.
    """
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) < 4 or np.any(np.diff(eps) >= 0):
        raise ValueError("eps_list must be decreasing with at least 4 entries")
    J = np.array([rayleigh_J(d, test_function(d, e, rho0), lam) for e in eps])
    y = J * CONSTANTS.K4_sq - 1.0
    A = np.column_stack([np.ones_like(eps), eps**2 * np.log(eps), eps**2])
    if np.linalg.matrix_rank(A) < 3:
        raise ValueError("degenerate regression")
    (a, b, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    u = test_function(d, eps[-1], rho0)
    ratio = dirichlet(d, u) / d.integrate(u**4)
    return ExpansionRecord(
        eps=eps.tolist(), J_values=J.tolist(), coef_log=float(b), coef_sq=float(c),
        intercept=float(a), limit_estimate=float((1 + a) * CONSTANTS.inv_K4_sq),
        slope_sign=int(np.sign(b)), gradient_mass_ratio=float(ratio),
    )


def _constant_v(params: PhysicsParams, u):
    return params.q * u * u / (params.m1**2 + params.q**2 * u * u)


def constant_branch(params: PhysicsParams, samples: int = 4000) -> list[tuple[float, float]]:
    """All positive constant solutions ``(u, v)`` found by bracketing sign changes of

        g(u) = u^(p-2) + omega^2 (q v(u) - 1)^2 - m0^2,  v(u) = q u^2 / (m1^2 + q^2 u^2)

    on ``(0, 2 m0^(2/(p-2))]`` and refining each bracket with Brent's method.
    """
    p = params.p

    def g(u):
        return u ** (p - 2) + params.omega**2 * (params.q * _constant_v(params, u) - 1) ** 2 - params.m0**2

    umax = 2.0 * params.m0 ** (2.0 / (p - 2))
    grid = np.linspace(0.0, umax, samples + 1)[1:]
    vals = g(grid)
    roots = []
    for a, b, ga, gb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if ga == 0:
            roots.append(a)
        elif ga * gb < 0:
            roots.append(brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    # a root below the first sample (omega^2 close to m0^2)
    if vals[0] > 0:
        roots.insert(0, brentq(g, 1e-300, grid[0], xtol=1e-300, rtol=4 * np.finfo(float).eps))
    return [(float(u), float(_constant_v(params, u))) for u in roots]


def degenerate_family(eps: float, q: float, m0: float, m1: float, p: float,
                      margin: float = 0.1) -> tuple[float, float, float]:
    """Constant solutions ``u = eps`` with the phase tuned to make them exact:

        v = q eps^2 / (m1^2 + q^2 eps^2),  omega^2 = (m0^2 - eps^(p-2)) / (q v - 1)^2.

    Returns ``(u, v, omega_sq)``; ``omega_sq`` tends to ``m0^2`` as ``eps -> 0``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = q * eps**2 / (m1**2 + q**2 * eps**2)
    top = m0**2 - eps ** (p - 2)
    if not top > 0:
        raise ValueError(f"eps={eps} too large: m0^2 - eps^(p-2) = {top} <= 0")
    omega_sq = top / (q * v - 1) ** 2
    if not omega_sq < m0**2 * (1 + margin):
        raise ValueError(f"eps={eps} too large: omega^2 = {omega_sq} beyond m0^2 (1 + {margin})")
    return float(eps), float(v), float(omega_sq)


def threshold_mask(d: Discretization, params: PhysicsParams) -> np.ndarray:
    """Pointwise ``m0^2 < omega^2 + S_g(x)/6``."""
    return params.m0**2 < params.omega**2 + d.scalar_curvature / 6.0


@dataclass
class SweepRow:
    omega: float
    p: float
    converged: bool
    threshold_holds: bool
    threshold_somewhere: bool
    c_p: float
    sup_u: float
    mu: float
    r1: float
    r2: float
    is_constant: bool
    iterations: int
    second_difference_sup: float = float("nan")


@dataclass
class SweepReport:
    rows: list
    params: PhysicsParams
    manifold: object
    admissible_set: str = ""
    results: list = field(default_factory=list, repr=False)

    CSV_COLUMNS = ("omega", "p", "converged", "threshold_holds", "c_p", "sup_u", "mu",
                   "r1", "r2", "is_constant", "iterations")

    def max_sup_u(self, converged_only: bool = True) -> float:
        vals = [r.sup_u for r in self.rows if r.converged or not converged_only]
        return float(max(vals)) if vals else float("nan")

    def median_sup_u(self) -> float:
        vals = [r.sup_u for r in self.rows if r.converged]
        return float(np.median(vals)) if vals else float("nan")


def _second_difference_sup(d: Discretization, u) -> float:
    """``sup |Delta_g u|``: discrete stand-in for the C^2 part of the Hölder norm."""
    return float(np.max(np.abs(d.laplacian(u))))


def _sweep_row(d, params, omega, p, settings, seed_kwargs) -> tuple[SweepRow, MPTResult | None]:
    pp = PhysicsParams(params.q, params.m0, params.m1, omega, p)
    mask = threshold_mask(d, pp)
    nan = float("nan")
    try:
        u0 = select_seed(d, pp, **seed_kwargs)
        res = mpa_solve(d, pp, u0, settings)
    except (SolverError, BlowUpError) as exc:
        log.warning("omega=%g: %s", omega, exc)
        return SweepRow(omega, p, False, bool(mask.all()), bool(mask.any()), nan, nan, nan, nan, nan,
                        False, 0), None
    return SweepRow(
        omega=float(omega), p=float(p), converged=res.converged, threshold_holds=bool(mask.all()),
        threshold_somewhere=bool(mask.any()), c_p=res.c_p, sup_u=res.sup_u, mu=res.mu,
        r1=res.residuals[0], r2=res.residuals[1], is_constant=res.is_constant,
        iterations=res.iterations, second_difference_sup=_second_difference_sup(d, res.u),
    ), res


def phase_sweep(d: Discretization, params: PhysicsParams, omega_grid, p: float | None = None,
                settings: MPASettings | None = None, workers: int | None = None,
                seed_kwargs: dict | None = None) -> SweepReport:
    """Run ``mpa_solve`` for each phase; rows come back sorted by ``omega``.

    ``workers`` defaults to ``KGMP_THREADS`` or the core count.
    """
    p = params.p if p is None else p
    omegas = sorted(float(w) for w in omega_grid)
    for w in omegas:
        if not abs(w) < params.m0:
            raise ValueError(f"omega={w} outside (-m0, m0)")
    seed_kwargs = {} if seed_kwargs is None else dict(seed_kwargs)
    if workers is None:
        workers = int(os.environ.get("KGMP_THREADS", os.cpu_count() or 1))
    workers = max(1, workers)
    if workers == 1:
        out = [_sweep_row(d, params, w, p, settings, seed_kwargs) for w in omegas]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(lambda w: _sweep_row(d, params, w, p, settings, seed_kwargs), omegas))
    w0 = min(abs(w) for w in omegas) if omegas else 0.0
    k0 = f"(-{params.m0:g}, -{w0:g}] U [{w0:g}, {params.m0:g})"
    return SweepReport(rows=[r for r, _ in out], params=params, manifold=d.spec,
                       admissible_set=k0, results=[res for _, res in out])


@dataclass
class BlowupRecord:
    mu: float
    center: tuple
    profile_error: float
    radii: list


def blowup_diagnostics(d: Discretization, u, radii_factors=(0, 1, 2, 4, 8)) -> BlowupRecord:
    """Rescale ``u`` at its maximum and compare with the bubble ``(1 + s^2/8)^{-1}``.

    ``mu = 1/max u``; the error is the largest deviation of ``mu u`` sampled at
    geodesic distance ``s = k mu`` from the maximum. On radial grids the sample
    is interpolated along the colatitude (pointing away from the pole when the
    maximum sits at one); on the torus it is the nearest node along the first
    axis. Radii outside the chart are skipped.
    """
    u = d.check(u)
    top = float(u.max())
    if not top > 0:
        raise ValueError("u has no positive values")
    mu = 1.0 / top
    idx = np.unravel_index(int(np.argmax(u)), u.shape)
    errs = []
    used = []
    for k in radii_factors:
        s = k * mu
        if s > d.injectivity_radius:
            continue
        if d.kind == "torus4":
            x = d.coords[0]
            h = x[1] - x[0]
            j = (idx[0] + int(round(s / h))) % len(x)
            val = u[(j,) + tuple(idx[1:])]
        else:
            r = d.coords[0]
            rc = r[idx[0]]
            target = rc - s if idx[0] == len(r) - 1 else rc + s
            if not r[0] <= target <= r[-1]:
                continue
            val = np.interp(target, r, u)
        used.append(float(s))
        errs.append(abs(mu * val - bubble_profile(s / mu)))
    coords = tuple(float(c[i]) for c, i in zip(d.coords, idx))
    return BlowupRecord(mu=mu, center=coords, profile_error=float(max(errs)), radii=used)


def test_function_moment(d: Discretization, eps: float, power: float = 8.0 / 3.0,
                         rho0: float | None = None) -> float:
    """``int u_eps^power``; for ``power = 8/3`` it scales like ``eps^(4/3)``."""
    return d.integrate(test_function(d, eps, rho0) ** power)


__all__ += ["test_function_moment", "default_rho0"]
