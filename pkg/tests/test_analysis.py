import numpy as np
import pytest

from kgmp.analysis import (blowup_diagnostics, bubble_quotient_estimate, constant_branch,
                           degenerate_family, expansion_check, phase_sweep,
                           threshold_mask)
from kgmp.analysis import test_function_moment as moment
from kgmp.functional import system_residual
from kgmp.manifold import Sphere4Radial, build_manifold
from kgmp.phi_map import PhysicsParams
from kgmp.profiles import CONSTANTS, bubble_profile


def test_bubble_quotient_estimate():
    est, mu = bubble_quotient_estimate()
    assert abs(est / CONSTANTS.inv_K4_sq - 1) <= 0.02
    assert est >= CONSTANTS.inv_K4_sq * (1 - 1e-3)  # Sobolev: never clearly below the sharp value
    assert mu > 0


def test_constant_branch_no_phase():
    (u, v), = constant_branch(PhysicsParams(q=1, m0=1, m1=1, omega=0.0, p=4.0))
    assert u == pytest.approx(1.0, abs=1e-12) and v == pytest.approx(0.5, abs=1e-12)
    (u, v), = constant_branch(PhysicsParams(q=2, m0=1.5, m1=0.7, omega=0.0, p=3.0))
    assert u == pytest.approx(1.5**2, rel=1e-12)


def test_constant_branch_solves_system(manifold):
    for P in (PhysicsParams(omega=0.5, p=3.0), PhysicsParams(q=2.0, m0=1.3, m1=0.5, omega=1.2, p=3.5)):
        roots = constant_branch(P)
        assert roots
        for u, v in roots:
            r1, r2 = system_residual(manifold, P, manifold.constant(u), manifold.constant(v))
            assert max(r1, r2) <= 1e-10


def test_constant_branch_near_endpoint_phase():
    # g(u) = u^2 + omega^2 m1^4/(m1^2+q^2u^2)^2 - m0^2 ~ (omega^2 - m0^2) + u^2 (1 - 2 omega^2 q^2/m1^2)
    # so the root tends to 0 only under weak coupling, 2 omega^2 q^2 < m1^2
    for w in (0.99, 0.999, 0.9999):
        (u, _), = constant_branch(PhysicsParams(q=0.5, m0=1.0, m1=1.0, omega=w, p=4.0))
        predicted = np.sqrt((1 - w * w) / (1 - 2 * w * w * 0.25))
        assert u == pytest.approx(predicted, rel=5e-2)
    (u, _), = constant_branch(PhysicsParams(q=0.5, m0=1.0, m1=1.0, omega=0.9999, p=4.0))
    assert u < 0.02
    # strong coupling keeps the root away from 0
    (u, _), = constant_branch(PhysicsParams(q=1, m0=1, m1=1, omega=0.999, p=4.0))
    assert 0.7 < u < 0.9


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05, 0.01])
def test_degenerate_family(torus, eps):
    P = PhysicsParams(q=1, m0=1, m1=1, omega=0.0, p=4.0)
    u, v, w2 = degenerate_family(eps, 1.0, 1.0, 1.0, 4.0)
    r1, r2 = system_residual(torus, P, torus.constant(u), torus.constant(v), omega_sq=w2)
    assert max(r1, r2) <= 1e-12
    assert abs(w2 - 1.0) <= 2 * eps**2
    assert v / eps**2 == pytest.approx(1.0, rel=2 * eps**2)


def test_degenerate_family_validation():
    with pytest.raises(ValueError):
        degenerate_family(0.0, 1, 1, 1, 4)
    with pytest.raises(ValueError):
        degenerate_family(1.5, 1, 1, 1, 4)


def test_threshold_mask(sphere, torus):
    assert threshold_mask(sphere, PhysicsParams(m0=1.2, omega=1.1)).all()
    assert not threshold_mask(sphere, PhysicsParams(m0=2.0, omega=0.1)).any()
    assert not threshold_mask(torus, PhysicsParams(omega=0.5)).any()


def test_expansion_signs_fine_sphere():
    d = build_manifold(Sphere4Radial(nodes=16385))
    eps = [0.2, 0.1, 0.05, 0.02]
    low = expansion_check(d, 1.0, eps, rho0=1.0)
    high = expansion_check(d, 3.0, eps, rho0=1.0)
    assert low.slope_sign == 1 and high.slope_sign == -1
    assert low.J_values[-1] < CONSTANTS.inv_K4_sq
    assert low.gradient_mass_ratio == pytest.approx(8.0, rel=0.02)
    assert low.limit_estimate == pytest.approx(CONSTANTS.inv_K4_sq, rel=0.02)


def test_expansion_validation(sphere):
    with pytest.raises(ValueError):
        expansion_check(sphere, 1.0, [0.1, 0.2, 0.05, 0.02])
    with pytest.raises(ValueError):
        expansion_check(sphere, 1.0, [0.2, 0.1, 0.05])


def test_moment_bounded():
    d = build_manifold(Sphere4Radial(nodes=4097))
    ratios = [moment(d, e, rho0=1.0) / e ** (4 / 3) for e in (0.2, 0.1, 0.05)]
    assert max(ratios) < 10.0


def test_blowup_diagnostics_bubble(sphere):
    mu = 0.05
    u = bubble_profile(sphere.coords[0] / mu) / mu
    rec = blowup_diagnostics(sphere, u)
    assert rec.mu == pytest.approx(mu)
    assert rec.profile_error <= 0.02
    assert rec.center == (0.0,)


def test_blowup_diagnostics_constant(torus):
    rec = blowup_diagnostics(torus, torus.constant(20.0))
    assert rec.profile_error > 0.5
    with pytest.raises(ValueError):
        blowup_diagnostics(torus, torus.constant(-1.0))


def test_phase_sweep_small(torus):
    P = PhysicsParams(q=1, m0=1, m1=1, omega=0.0, p=3.0)
    rep = phase_sweep(torus, P, [0.5, -0.5, 0.0], workers=2)
    assert [r.omega for r in rep.rows] == [-0.5, 0.0, 0.5]
    assert all(r.converged for r in rep.rows)
    assert rep.rows[0].c_p == pytest.approx(rep.rows[2].c_p, rel=1e-9)
    assert rep.max_sup_u() <= 3 * rep.median_sup_u()
    assert not any(r.threshold_holds for r in rep.rows)
    serial = phase_sweep(torus, P, [0.5, -0.5, 0.0], workers=1)
    assert [r.c_p for r in serial.rows] == [r.c_p for r in rep.rows]
    with pytest.raises(ValueError):
        phase_sweep(torus, P, [1.0])
