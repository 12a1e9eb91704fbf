"""Model closed 4-manifolds: the flat torus T^4 and the round sphere S^4
restricted to functions of the geodesic colatitude.

Sign convention: the Laplace-Beltrami operator is the *geometer's* one,
``Delta_g = -div_g grad``, which is a nonnegative operator. Every equation
in this package uses it, so ``Delta_g u + m^2 u = f`` is the coercive
(screened) problem and ``cos(x)`` has eigenvalue ``+1``.

Torus fields are 4-D arrays of shape ``(N1, N2, N3, N4)`` and the Laplacian
acts diagonally in the Fourier basis. Radial fields (sphere, flat R^4 chart)
are 1-D arrays over a uniform grid in ``r`` and use a conservative
finite-volume stencil whose cell volumes are exact integrals of the radial
volume density, so the discrete operator is self-adjoint for the quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solveh_banded

AXES = (0, 1, 2, 3)
TWO_PI_SQ = 2.0 * np.pi**2  # volume of the unit 3-sphere


@dataclass(frozen=True)
class Torus4:
    lengths: Sequence[float] = (2 * np.pi,) * 4
    nodes: Sequence[int] = (8,) * 4

    def __post_init__(self):
        if len(self.lengths) != 4 or len(self.nodes) != 4:
            raise ValueError("Torus4 needs 4 side lengths and 4 node counts")
        if any(L <= 0 for L in self.lengths):
            raise ValueError(f"side lengths must be positive, got {tuple(self.lengths)}")
        for n in self.nodes:
            if int(n) != n or n < 8:
                raise ValueError(f"node counts must be integers >= 8, got {tuple(self.nodes)}")
            if n % 2:
                raise ValueError(f"torus node counts must be even, got {tuple(self.nodes)}")
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))


@dataclass(frozen=True)
class Sphere4Radial:
    radius: float = 1.0
    nodes: int = 512

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if int(self.nodes) != self.nodes or self.nodes < 8:
            raise ValueError(f"radial node count must be an integer >= 8, got {self.nodes}")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "nodes", int(self.nodes))


@dataclass(frozen=True)
class FlatRadial4:
    """Ball of radius ``r_max`` in flat R^4, radial functions, Neumann at ``r_max``.

    Used as the blow-up chart for bubble computations.
    """
    r_max: float = 40.0
    nodes: int = 4001

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if int(self.nodes) != self.nodes or self.nodes < 8:
            raise ValueError(f"radial node count must be an integer >= 8, got {self.nodes}")


ManifoldSpec = Union[Torus4, Sphere4Radial, FlatRadial4]


@dataclass(frozen=True, eq=False)
class Discretization:
    """Immutable grid data plus the Laplacian and shifted-inverse actions.

    ``weights`` has the same shape as a field, so ``integrate`` is just
    ``sum(weights * u)``. ``distance`` holds d_g(x0, x_i) from ``base_point``.
    """
    spec: ManifoldSpec
    kind: str
    shape: tuple
    coords: tuple
    weights: np.ndarray
    scalar_curvature: np.ndarray
    volume: float
    base_point: tuple
    distance: np.ndarray
    injectivity_radius: float
    _laplacian: Callable = field(repr=False)
    _shifted_inverse: Callable = field(repr=False)
    _preconditioner: Callable = field(repr=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"field shape {u.shape} does not match grid shape {self.shape}")
        return u

    def laplacian(self, u) -> np.ndarray:
        return self._laplacian(self.check(u))

    def shifted_inverse(self, f, shift: float) -> np.ndarray:
        """Apply ``(Delta_g + shift)^{-1}`` for a constant ``shift > 0``."""
        if not shift > 0:
            raise ValueError(f"shift must be positive, got {shift}")
        return self._shifted_inverse(self.check(f), float(shift))

    def preconditioner(self, V) -> Callable:
        """Approximate ``(Delta_g + V)^{-1}`` for a positive potential field ``V``.

        Torus: ``(Delta_g + mean V)^{-1}`` by FFT. Radial grids: the exact
        banded Cholesky factorization of ``Delta_g + V``.
        """
        return self._preconditioner(self.check(V))

    def integrate(self, u) -> float:
        return float(np.sum(self.weights * self.check(u)))

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.shape, float(c))


def build_manifold(spec: ManifoldSpec) -> Discretization:
    if isinstance(spec, Torus4):
        return _build_torus(spec)
    if isinstance(spec, Sphere4Radial):
        return _build_radial(spec, "sphere4_radial")
    if isinstance(spec, FlatRadial4):
        return _build_radial(spec, "flat4_radial")
    raise TypeError(f"unknown manifold spec {spec!r}")


def apply_laplacian(d: Discretization, u) -> np.ndarray:
    return d.laplacian(u)


def integrate(d: Discretization, u) -> float:
    return d.integrate(u)


def _build_torus(spec: Torus4) -> Discretization:
    L = np.array(spec.lengths)
    N = spec.nodes
    axes = tuple(np.arange(n) * (l / n) for n, l in zip(N, L))
    cell = float(np.prod(L / np.array(N)))
    shape = tuple(N)
    weights = np.full(shape, cell)

    # symbol sum_j (2 pi k_j / L_j)^2 on the rfftn layout
    ks = [np.fft.fftfreq(n, d=1.0 / n) for n in N[:-1]] + [np.fft.rfftfreq(N[-1], d=1.0 / N[-1])]
    symbol = np.zeros([len(k) for k in ks])
    for j, k in enumerate(ks):
        s = [1, 1, 1, 1]
        s[j] = len(k)
        symbol = symbol + ((2 * np.pi * k / L[j]) ** 2).reshape(s)

    def laplacian(u):
        return np.fft.irfftn(symbol * np.fft.rfftn(u), s=shape, axes=AXES)

    def shifted_inverse(f, c):
        return np.fft.irfftn(np.fft.rfftn(f) / (symbol + c), s=shape, axes=AXES)

    def preconditioner(V):
        vbar = float(np.mean(V))
        return lambda f: shifted_inverse(f, vbar)

    # minimum-image distance from the origin node
    grids = np.meshgrid(*axes, indexing="ij")
    dist2 = np.zeros(shape)
    for x, l in zip(grids, L):
        dx = np.minimum(x, l - x)
        dist2 += dx**2

    return Discretization(
        spec=spec,
        kind="torus4",
        shape=shape,
        coords=axes,
        weights=weights,
        scalar_curvature=np.zeros(shape),
        volume=float(np.prod(L)),
        base_point=(0.0, 0.0, 0.0, 0.0),
        distance=np.sqrt(dist2),
        injectivity_radius=float(L.min() / 2),
        _laplacian=laplacian,
        _shifted_inverse=shifted_inverse,
        _preconditioner=preconditioner,
    )


def _build_radial(spec, kind: str) -> Discretization:
    n = spec.nodes
    if kind == "sphere4_radial":
        rho = spec.radius
        R = np.pi * rho

        def density(r):
            return TWO_PI_SQ * rho**3 * np.sin(r / rho) ** 3

        def sin3_integral(t):
            # int_0^t sin^3 = (1 - cos t)^2 (2 + cos t) / 3, cancellation-free near t = 0
            return 4.0 * np.sin(t / 2) ** 4 * (2.0 + np.cos(t)) / 3.0

        def cell_volume(lo, hi):
            a, b = lo / rho, hi / rho
            m = np.pi / 2
            # integrate from the nearer pole on each half to keep tiny cells accurate
            out = sin3_integral(np.minimum(b, m)) - sin3_integral(np.minimum(a, m))
            out += sin3_integral(np.pi - np.maximum(a, m)) - sin3_integral(np.pi - np.maximum(b, m))
            return TWO_PI_SQ * rho**4 * out

        curvature = 12.0 / rho**2
        volume = 8.0 * np.pi**2 / 3.0 * rho**4
        inj = R
    else:
        R = float(spec.r_max)

        def density(r):
            return TWO_PI_SQ * r**3

        def cell_volume(lo, hi):
            return TWO_PI_SQ * (hi**4 - lo**4) / 4.0

        curvature = 0.0
        volume = TWO_PI_SQ * R**4 / 4.0
        inj = R

    r = np.linspace(0.0, R, n)
    h = r[1] - r[0]
    lo = np.clip(r - h / 2, 0.0, R)
    hi = np.clip(r + h / 2, 0.0, R)
    weights = cell_volume(lo, hi)
    faces = density(0.5 * (r[1:] + r[:-1])) / h  # flux coefficients between i and i+1

    def stiffness(u):
        flux = faces * np.diff(u)
        out = np.zeros_like(u)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def laplacian(u):
        return stiffness(u) / weights

    # symmetric tridiagonal K + diag(c W) in upper banded storage
    diag0 = np.zeros(n)
    diag0[:-1] += faces
    diag0[1:] += faces
    upper = np.zeros(n)
    upper[1:] = -faces

    def shifted_inverse(f, c):
        ab = np.vstack([upper, diag0 + c * weights])
        return solveh_banded(ab, weights * f)

    def preconditioner(V):
        cb = cholesky_banded(np.vstack([upper, diag0 + V * weights]))
        return lambda f: cho_solve_banded((cb, False), weights * f)

    return Discretization(
        spec=spec,
        kind=kind,
        shape=(n,),
        coords=(r,),
        weights=weights,
        scalar_curvature=np.full(n, curvature),
        volume=float(volume),
        base_point=(0.0,),
        distance=r.copy(),
        injectivity_radius=float(inj),
        _laplacian=laplacian,
        _shifted_inverse=shifted_inverse,
        _preconditioner=preconditioner,
    )


def random_smooth_field(d: Discretization, rng: np.random.Generator, kmax: int = 2,
                        amplitude: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Band-limited random field; identical function on any resolution of the same manifold.

    Torus: random cos/sin modes with integer wavevectors ``|k_j| <= kmax``.
    Radial grids: random ``cos(l r / rho)`` modes, ``l <= 2*kmax``.
    """
    if d.kind == "torus4":
        L = d.spec.lengths
        grids = np.meshgrid(*d.coords, indexing="ij")
        u = np.full(d.shape, float(offset))
        nmodes = 6
        for _ in range(nmodes):
            k = rng.integers(-kmax, kmax + 1, size=4)
            a, b = rng.normal(size=2) * amplitude / np.sqrt(nmodes)
            phase = sum(2 * np.pi * kj * x / l for kj, x, l in zip(k, grids, L))
            u += a * np.cos(phase) + b * np.sin(phase)
        return u
    r = d.coords[0]
    scale = np.pi / r[-1]
    coef = rng.normal(size=2 * kmax + 1) * amplitude / np.sqrt(2 * kmax + 1)
    return offset + sum(c * np.cos(l * scale * r) for l, c in enumerate(coef))
