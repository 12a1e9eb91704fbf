"""Numerical mountain-pass search for positive solutions of the reduced problem.

The path class is piecewise linear in field space from ``0`` to ``T0 u0``.
Each sweep moves the interior path nodes one backtracking step along the
``(Delta_g + 1)^{-1}``-preconditioned negative gradient and redistributes
them by H^1 arclength. Once the path maximum stalls, the highest node climbs to the nearby saddle
by a damped fixed-point iteration and is then polished by Newton-Krylov on
``grad I_p = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .elliptic import DEFAULT_TOL, SolverError, l2_inner, l2_norm
from .functional import Ip, grad_Ip, system_residual
from .manifold import Discretization
from .phi_map import PhysicsParams, phi
from .profiles import test_function

log = logging.getLogger(__name__)


class BlowUpError(SolverError):
    """The iteration lost compactness: ``max u`` exceeded the cap.

    ``mu_trajectory`` lists ``1/max u`` along the run.
    """

    def __init__(self, message, mu_trajectory, result=None):
        super().__init__(message, result)
        self.mu_trajectory = list(mu_trajectory)


@dataclass
class MPASettings:
    path_nodes: int = 21
    max_sweeps: int = 500
    step0: float = 0.1
    refine_tol: float = 1e-8
    blowup_cap: float = 1e4
    residual_tol: float = 1e-6
    stall_rtol: float = 1e-6
    stall_window: int = 5
    inner_tol: float = DEFAULT_TOL
    refine_inner_tol: float = 1e-11
    max_newton: int = 60

    def __post_init__(self):
        if self.path_nodes < 5:
            raise ValueError(f"path_nodes must be >= 5, got {self.path_nodes}")
        for name in ("step0", "refine_tol", "blowup_cap", "residual_tol", "stall_rtol",
                     "inner_tol", "refine_inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_sweeps < 1 or self.max_newton < 1:
            raise ValueError("sweep and Newton caps must be >= 1")


@dataclass
class MPTResult:
    u: np.ndarray
    v: np.ndarray
    c_p: float
    residuals: tuple
    mu: float
    iterations: int
    converged: bool
    is_constant: bool
    T0: float = float("nan")
    sweeps: int = 0
    grad_norm: float = float("nan")
    path_max_history: list = field(default_factory=list)
    mu_trajectory: list = field(default_factory=list)

    @property
    def sup_u(self) -> float:
        return float(np.max(self.u))


def is_constant_field(u) -> bool:
    mean = float(np.mean(u))
    return bool(np.max(np.abs(u - mean)) < 1e-6 * abs(mean)) if mean != 0 else not np.any(u)


def select_seed(d: Discretization, params: PhysicsParams | None = None, strategy: str = "constant_bump",
                height: float = 1.0, eps: float = 0.1, rho0: float | None = None) -> np.ndarray:
    """``constant_bump``: ``u0 = height``; ``test_function``: truncated bubble at the base point."""
    if strategy == "constant_bump":
        if not height > 0:
            raise ValueError(f"height must be positive, got {height}")
        return d.constant(height)
    if strategy == "test_function":
        return test_function(d, eps, rho0)
    raise ValueError(f"unknown seed strategy {strategy!r}")


def find_T0(d: Discretization, params: PhysicsParams, u0, tol: float = DEFAULT_TOL,
            cap_exp: int = 30) -> float:
    """Smallest power of two ``T`` with ``I_p(T u0) < 0``."""
    u0 = d.check(u0)
    if not np.any(u0 > 0):
        raise ValueError("seed has no positive part; I_p(t u0) never becomes negative")
    for k in range(cap_exp + 1):
        T = 2.0**k
        if Ip(d, params, T * u0, tol) < 0:
            return T
    raise SolverError(f"I_p(T u0) >= 0 up to T = 2^{cap_exp}; degenerate seed")


class _Path:
    """Field-space path with per-node cached Phi (warm starts) and energies."""


    def __init__(self, d, params, nodes, tol):
        self.d = d
        self.params = params
        self.tol = tol
        self.nodes = [np.array(u, dtype=float) for u in nodes]
        self.phis = [phi(d, params, u, tol) for u in self.nodes]
        self.energies = [Ip(d, params, u, tol, ph) for u, ph in zip(self.nodes, self.phis)]

    def set_node(self, i, u, ph=None, energy=None):
        self.nodes[i] = u
        self.phis[i] = phi(self.d, self.params, u, self.tol, x0=self.phis[i]) if ph is None else ph
        self.energies[i] = (Ip(self.d, self.params, u, self.tol, self.phis[i])
                            if energy is None else energy)

    def h1_dist(self, a, b):
        diff = a - b
        return np.sqrt(max(l2_inner(self.d, diff, self.d.laplacian(diff) + diff), 0.0))

    def reparametrize(self, level: float = -np.inf, weight: float = 4.0):
        """Redistribute interior nodes at equal energy-weighted H^1 arclength.

        Segment ``j`` counts ``1 + weight * e_j`` times its length, with ``e_j``
        the highest energy at its ends and midpoint above ``level``, scaled to
        [0, 1]. Nodes gather where the path is high, including a ridge that
        lies between two nodes. Returns the path maximum over nodes and
        midpoints before the move.
        """
        n = len(self.nodes)
        seg = np.array([self.h1_dist(self.nodes[i + 1], self.nodes[i]) for i in range(n - 1)])
        if seg.sum() == 0:
            return max(self.energies)
        top = np.empty(n - 1)
        for j in range(n - 1):
            mid = 0.5 * (self.nodes[j] + self.nodes[j + 1])
            ph = phi(self.d, self.params, mid, self.tol, x0=0.5 * (self.phis[j] + self.phis[j + 1]))
            top[j] = max(self.energies[j], self.energies[j + 1], Ip(self.d, self.params, mid, self.tol, ph))
        excess = np.maximum(top - level, 0.0) if np.isfinite(level) else top - top.min()
        scale = excess.max()
        w = 1.0 + (weight * excess / scale if scale > 0 else 0.0)
        s = np.concatenate([[0.0], np.cumsum(w * seg)])
        targets = np.linspace(0.0, s[-1], n)
        old = list(self.nodes)
        old_phis = list(self.phis)
        for i in range(1, n - 1):
            j = min(int(np.searchsorted(s, targets[i], side="right")) - 1, n - 2)
            width = s[j + 1] - s[j]
            frac = 0.0 if width == 0 else (targets[i] - s[j]) / width
            new = (1 - frac) * old[j] + frac * old[j + 1]
            if np.array_equal(new, old[i]):
                continue
            self.phis[i] = old_phis[j] if frac < 0.5 else old_phis[j + 1]
            self.set_node(i, new)
        return float(top.max())

    @property
    def imax(self) -> int:
        return int(np.argmax(self.energies))


def _descend_node(path: _Path, i: int, step: float, floor: float = -np.inf, max_halvings: int = 30):
    """Armijo step along the projected, preconditioned gradient. Steps that end at
    or below ``floor`` (the endpoint level) are shortened: a node that overshoots
    the ridge no longer marks it."""
    d, params, tol = path.d, path.params, path.tol
    u = path.nodes[i]
    g = grad_Ip(d, params, u, tol, path.phis[i])
    pg = d.shifted_inverse(g, 1.0)
    # drop the component along the path; arclength redistribution owns that direction
    tau = path.nodes[i + 1] - path.nodes[i - 1]
    tnorm = path.h1_dist(path.nodes[i + 1], path.nodes[i - 1])
    if tnorm > 0:
        tau = tau / tnorm
        pg = pg - l2_inner(d, g, tau) * tau
    slope = l2_inner(d, g, pg)
    if slope <= 0:
        return step, False
    e0 = path.energies[i]
    s = step
    for _ in range(max_halvings):
        trial = u - s * pg
        ph = phi(d, params, trial, tol, x0=path.phis[i])
        e = Ip(d, params, trial, tol, ph)
        if floor < e <= e0 - 1e-4 * s * slope:
            path.set_node(i, trial, ph, e)
            return min(2.0 * s, 1.0), True
        s *= 0.5
    return s, False


def climb(d: Discretization, params: PhysicsParams, u, tangent, settings: MPASettings,
          max_iter: int = 200, reduction: float = 1e-3) -> np.ndarray:
    """Damped fixed-point iteration toward the saddle near a path maximum.

    Steps along ``-(P g) + 2 <g, tau> tau`` with ``P = (Delta_g + 1)^{-1}`` and
    ``tau`` the H^1-unit path tangent: descent across the path, ascent along
    it. A step is kept when it lowers ``<g, P g>``. Stops once that merit has
    dropped by ``reduction`` or steps stop being accepted.
    """
    tol = settings.inner_tol
    tn = np.sqrt(max(l2_inner(d, tangent, d.laplacian(tangent) + tangent), 0.0))
    if tn == 0:
        return np.array(u, dtype=float)
    tau = tangent / tn
    u = np.array(u, dtype=float)
    ph = phi(d, params, u, tol)
    g = grad_Ip(d, params, u, tol, ph)
    pg = d.shifted_inverse(g, 1.0)
    merit0 = merit = l2_inner(d, g, pg)
    step = settings.step0
    for _ in range(max_iter):
        if merit <= reduction * merit0:
            break
        direction = -pg + 2.0 * l2_inner(d, g, tau) * tau
        s = step
        for _ in range(12):
            trial = u + s * direction
            pht = phi(d, params, trial, tol, x0=ph)
            gt = grad_Ip(d, params, trial, tol, pht)
            pgt = d.shifted_inverse(gt, 1.0)
            mt = l2_inner(d, gt, pgt)
            if mt < merit:
                break
            s *= 0.5
        else:
            break
        u, ph, g, pg, merit = trial, pht, gt, pgt, mt
        step = min(2.0 * s, 1.0)
    return u


def refine(d: Discretization, params: PhysicsParams, u0, settings: MPASettings,
           mu_trajectory: list | None = None) -> tuple[np.ndarray, int, float]:
    """Damped Newton-Krylov on ``(Delta_g + 1)^{-1} grad I_p(u) = 0``.

    Jacobian-vector products are forward differences of the gradient.
    Returns ``(u, newton_iterations, ||grad I_p(u)||_{L^2})``.
    """
    tol = settings.refine_inner_tol
    mu_trajectory = [] if mu_trajectory is None else mu_trajectory
    shape = d.shape
    u = np.array(u0, dtype=float)

    def grad(x, ph=None):
        ph = phi(d, params, x, tol, x0=ph)
        return grad_Ip(d, params, x, tol, ph), ph

    g, ph = grad(u)
    gnorm = l2_norm(d, g)
    for it in range(settings.max_newton):
        if gnorm <= settings.refine_tol:
            return u, it, gnorm
        F = d.shifted_inverse(g, 1.0)
        unorm = l2_norm(d, u)

        def jvp(vec, u=u, F=F, ph=ph, unorm=unorm):
            vec = vec.reshape(shape)
            vn = l2_norm(d, vec)
            if vn == 0:
                return np.zeros(vec.size)
            h = 1e-7 * (1.0 + unorm) / vn
            gh, _ = grad(u + h * vec, ph)
            return ((d.shifted_inverse(gh, 1.0) - F) / h).ravel()

        J = LinearOperator((u.size, u.size), matvec=jvp, dtype=float)
        delta, _ = gmres(J, -F.ravel(), rtol=min(1e-2, max(1e-6, gnorm)), atol=0.0,
                         restart=40, maxiter=4)
        delta = delta.reshape(shape)
        lam = 1.0
        while lam > 1e-4:
            trial = u + lam * delta
            gt, pht = grad(trial, ph)
            gtn = l2_norm(d, gt)
            if gtn < (1 - 1e-4 * lam) * gnorm:
                break
            lam *= 0.5
        else:
            raise SolverError(f"refinement stagnated at ||grad I_p|| = {gnorm:.3e}")
        u, g, ph, gnorm = trial, gt, pht, gtn
        top = float(u.max())
        mu_trajectory.append(1.0 / top if top > 0 else float("inf"))
        if top > settings.blowup_cap:
            raise BlowUpError(f"max u = {top:.3e} exceeded the blow-up cap during refinement",
                              mu_trajectory)
    if gnorm <= settings.refine_tol:
        return u, settings.max_newton, gnorm
    raise SolverError(f"refinement did not converge: ||grad I_p|| = {gnorm:.3e}")


def mpa_solve(d: Discretization, params: PhysicsParams, u0, settings: MPASettings | None = None) -> MPTResult:
    settings = MPASettings() if settings is None else settings
    u0 = d.check(u0)
    T0 = find_T0(d, params, u0, settings.inner_tol)
    P = settings.path_nodes
    ts = np.linspace(0.0, 1.0, P)
    path = _Path(d, params, [t * T0 * u0 for t in ts], settings.inner_tol)

    steps = np.full(P, settings.step0)
    history = [max(path.energies)]
    mu_traj = []
    sweeps = 0
    for sweeps in range(1, settings.max_sweeps + 1):
        moved = False
        # nodes below the endpoint level cannot carry the path maximum; moving them
        # only lets them run off into the unbounded valley
        level = max(path.energies[0], path.energies[-1])
        for i in range(1, P - 1):
            if path.energies[i] <= level:
                continue
            steps[i], ok = _descend_node(path, i, steps[i], floor=level)
            moved |= ok
        path_max = path.reparametrize(level)
        top = float(path.nodes[path.imax].max())
        mu_traj.append(1.0 / top if top > 0 else float("inf"))
        if top > settings.blowup_cap:
            raise BlowUpError(f"max u = {top:.3e} exceeded the blow-up cap after {sweeps} sweeps",
                              mu_traj)
        history.append(path_max)
        w = settings.stall_window
        if not moved:
            break
        if len(history) > w:
            old = history[-1 - w]
            if old - history[-1] <= settings.stall_rtol * max(abs(old), 1e-300):
                break
    log.info("path deformation: %d sweeps, path max %.10g", sweeps, history[-1])

    # refine from the highest node, then its neighbours if that gives only a constant
    imax = path.imax
    if not 0 < imax < P - 1:
        raise SolverError(f"path maximum sits at endpoint {imax}; the path lost its mountain-pass shape")
    order = [imax] + [j for j in (imax - 1, imax + 1) if 0 < j < P - 1]
    candidates = []
    errors = []
    for j in order:
        start = climb(d, params, path.nodes[j], path.nodes[j + 1] - path.nodes[j - 1], settings)
        if not np.any(start > 0):
            continue
        try:
            u, nit, gnorm = refine(d, params, start, settings, mu_traj)
        except BlowUpError:
            raise
        except SolverError as exc:
            errors.append(exc)
            continue
        res = _finish(d, params, u, settings, T0, sweeps, nit, gnorm, history, mu_traj)
        if res.c_p <= 0 or not np.any(u > 1e-6 * float(np.max(np.abs(path.nodes[j])))):
            errors.append(SolverError("refinement fell back to the trivial solution"))
            continue
        candidates.append(res)
        if not res.is_constant:
            break
    good = [c for c in candidates if c.converged]
    nonconst = [c for c in good if not c.is_constant]
    if nonconst:
        return min(nonconst, key=lambda c: c.c_p)
    if good:
        return min(good, key=lambda c: c.c_p)
    if candidates:
        return candidates[0]
    raise SolverError(f"no refinement candidate converged: {errors[0] if errors else 'no start'}")


def _finish(d, params, u, settings, T0, sweeps, nit, gnorm, history, mu_traj) -> MPTResult:
    tol = settings.refine_inner_tol
    v = phi(d, params, u, tol)
    c_p = Ip(d, params, u, tol, v)
    r1, r2 = system_residual(d, params, u, v)
    top = float(u.max())
    converged = (r1 <= settings.residual_tol and r2 <= settings.residual_tol
                 and float(u.min()) > 0 and float(v.min()) > 0 and float(v.max()) < 1.0 / params.q)
    return MPTResult(
        u=u, v=v, c_p=float(c_p), residuals=(float(r1), float(r2)),
        mu=1.0 / top if top > 0 else float("inf"),
        iterations=sweeps + nit, converged=bool(converged), is_constant=is_constant_field(u),
        T0=T0, sweeps=sweeps, grad_norm=float(gnorm),
        path_max_history=[float(h) for h in history], mu_trajectory=list(mu_traj),
    )


def continuation_to_critical(d: Discretization, params: PhysicsParams, p_list, u0,
                             settings: MPASettings | None = None) -> list[MPTResult]:
    """Solve along increasing exponents, warm-starting each solve from the previous solution.

    A blow-up ends the continuation and the results so far are returned. Other
    failures are recorded as non-converged entries.
    """
    p_list = [float(p) for p in p_list]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError(f"p_list must be strictly increasing, got {p_list}")
    out = []
    seed = d.check(u0)
    for p in p_list:
        pp = PhysicsParams(params.q, params.m0, params.m1, params.omega, p)
        try:
            res = mpa_solve(d, pp, seed, settings)
        except BlowUpError as exc:
            log.warning("blow-up at p=%g: %s", p, exc)
            out.append(_failed(d, exc, mu_trajectory=exc.mu_trajectory))
            break
        except SolverError as exc:
            log.warning("no convergence at p=%g: %s", p, exc)
            out.append(_failed(d, exc))
            continue
        out.append(res)
        if res.converged:
            seed = res.u
    return out


def _failed(d, exc, mu_trajectory=()) -> MPTResult:
    if isinstance(exc.result, MPTResult):
        r = exc.result
        r.converged = False
        return r
    nan = float("nan")
    return MPTResult(u=np.full(d.shape, nan), v=np.full(d.shape, nan), c_p=nan,
                     residuals=(nan, nan), mu=nan, iterations=0, converged=False,
                     is_constant=False, mu_trajectory=list(mu_trajectory))
