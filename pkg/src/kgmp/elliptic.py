"""Screened elliptic solves ``(Delta_g + V) w = f`` and the L^2 / H^1 / L^p
pairings every other module is built on.

Fields are plain numpy arrays shaped like ``d.shape``; the discretization is
passed alongside. The H^1 gradient term is computed as ``int u Delta_g w``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .manifold import Discretization

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """A numerical solve failed; ``result`` carries whatever partial output exists."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float


def l2_inner(d: Discretization, u, w) -> float:
    return float(np.sum(d.weights * d.check(u) * d.check(w)))


def l2_norm(d: Discretization, u) -> float:
    return np.sqrt(max(l2_inner(d, u, u), 0.0))


def h1_inner(d: Discretization, u, w) -> float:
    return l2_inner(d, u, d.laplacian(w)) + l2_inner(d, u, w)


def h1_norm(d: Discretization, u) -> float:
    return np.sqrt(max(h1_inner(d, u, u), 0.0))


def dirichlet(d: Discretization, u) -> float:
    """``int |grad u|^2`` realized as ``int u Delta_g u``."""
    return l2_inner(d, u, d.laplacian(u))


def lp_norm(d: Discretization, u, p: float) -> float:
    return d.integrate(np.abs(d.check(u)) ** p) ** (1.0 / p)


def screened_solve(d: Discretization, V, f, tol: float = DEFAULT_TOL, x0=None,
                   maxiter: int | None = None) -> SolveReport:
    """Solve ``(Delta_g + V) w = f`` by preconditioned conjugate gradients.

    The preconditioner is ``(Delta_g + mean(V))^{-1}`` by FFT on the torus and
    the exact banded factorization of ``Delta_g + V`` on radial grids. Inner products are the quadrature
    ones, in which both operators are self-adjoint. Stops when
    ``||r||_{L^2} <= tol * ||f||_{L^2}``.
    """
    V = d.check(V)
    f = d.check(f)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    vmin = float(V.min())
    if not vmin > 0:
        raise ValueError(f"potential must be strictly positive, min V = {vmin}")
    maxiter = 10 * d.size if maxiter is None else maxiter
    w = d.weights

    def A(x):
        return d.laplacian(x) + V * x

    fnorm = np.sqrt(np.sum(w * f * f))
    if fnorm == 0.0:
        return SolveReport(np.zeros(d.shape), 0, 0.0)
    target = tol * fnorm

    prec = d.preconditioner(V)
    x = prec(f) if x0 is None else np.array(x0, dtype=float)
    it = 0
    best = np.inf
    # restart from the true residual when the recursive one drifts below target
    while True:
        r = f - A(x)
        rnorm = np.sqrt(np.sum(w * r * r))
        if rnorm <= target or it >= maxiter or rnorm >= 0.5 * best:
            break
        best = rnorm
        z = prec(r)
        s = z.copy()
        rz = np.sum(w * r * z)
        while rnorm > target and it < maxiter:
            As = A(s)
            alpha = rz / np.sum(w * s * As)
            x += alpha * s
            r -= alpha * As
            it += 1
            rnorm = np.sqrt(np.sum(w * r * r))
            z = prec(r)
            rz_new = np.sum(w * r * z)
            s = z + (rz_new / rz) * s
            rz = rz_new
    if rnorm > target:
        raise SolverError(
            f"screened solve did not reach tol {tol:.1e} in {it} iterations "
            f"(relative residual {rnorm / fnorm:.2e})"
        )
    return SolveReport(x, it, float(rnorm / fnorm))
