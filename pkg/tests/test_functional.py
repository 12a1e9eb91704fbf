import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgmp import checks
from kgmp.analysis import constant_branch
from kgmp.elliptic import l2_norm
from kgmp.functional import (energy_F4, energy_Ip, energy_S, grad_Ip, positive_power, rayleigh_J,
                             system_residual)
from kgmp.manifold import Sphere4Radial, Torus4, build_manifold, random_smooth_field
from kgmp.phi_map import PhysicsParams, phi


def test_positive_power():
    out = positive_power(np.array([-2.0, 0.0, 4.0]), 1.5)
    assert np.allclose(out, [0.0, 0.0, 8.0])


def test_zero_field(manifold, params):
    z = manifold.constant(0.0)
    e = energy_Ip(manifold, params, z)
    assert (e.kinetic, e.mass, e.power, e.coupling) == (0.0, 0.0, 0.0, 0.0)
    assert not np.any(grad_Ip(manifold, params, z))
    assert energy_S(manifold, params, z, z) == 0.0
    assert system_residual(manifold, params, z, z) == (0.0, 0.0)


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_constant_energy_no_phase(torus, p):
    P = PhysicsParams(m0=1.3, omega=0.0, p=p)
    c = 0.8
    V = torus.volume
    assert energy_Ip(torus, P, torus.constant(c)).total == pytest.approx(
        V * (1.3**2 * c * c / 2 - c**p / p), rel=1e-12)


def test_constant_coupling(manifold, params):
    c = 1.4
    ph = params.q * c * c / (params.m1**2 + params.q**2 * c * c)
    e = energy_Ip(manifold, params, manifold.constant(c))
    assert e.coupling == pytest.approx(-params.omega**2 / 2 * (1 - params.q * ph) * c * c * manifold.volume,
                                       rel=1e-9)


def test_S_constant_v_zero(manifold, params):
    c = 0.9
    V = manifold.volume
    val = energy_S(manifold, params, manifold.constant(c), manifold.constant(0.0))
    w2 = params.omega**2
    assert val == pytest.approx(V * (params.m0**2 * c * c / 2 - c**4 / 4 - w2 * c * c / 2), rel=1e-12)


def test_gradient_vanishes_on_constant_branch(manifold):
    for P in (PhysicsParams(omega=0.5, p=3.0), PhysicsParams(m0=1.2, omega=0.9, p=4.0)):
        for c, _ in constant_branch(P):
            g = grad_Ip(manifold, P, manifold.constant(c), tol=1e-12 if manifold.kind == "torus4" else 1e-11)
            assert l2_norm(manifold, g) <= 1e-7


def test_gradient_suite_short(manifold, params):
    rows = checks.gradient_suite(manifold, params, np.random.default_rng(11), n_pairs=3)
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]


def test_reduction_identity(manifold, params):
    rows = checks.reduction_suite(manifold, params, np.random.default_rng(13), n_fields=5)
    assert all(r.passed for r in rows)


def test_phi_second_residual(manifold, params, rng):
    u = random_smooth_field(manifold, rng, offset=0.5)
    tol = 1e-10
    ph = phi(manifold, params, u, tol)
    r1, r2 = system_residual(manifold, params, u, ph)
    assert r2 <= 10 * tol * l2_norm(manifold, params.q * u * u)
    assert r1 > 1e-3


def test_rayleigh_constant(manifold):
    lam = 2.0
    assert rayleigh_J(manifold, manifold.constant(1.7), lam) == pytest.approx(lam * np.sqrt(manifold.volume))
    with pytest.raises(ZeroDivisionError):
        rayleigh_J(manifold, manifold.constant(0.0), lam)


def test_F4_is_critical_Ip_without_coupling(torus, rng):
    u = random_smooth_field(torus, rng, amplitude=0.5, offset=3.0)
    P = PhysicsParams(m0=1.1, omega=0.0, p=4.0)
    assert energy_F4(torus, u, 1.21) == pytest.approx(energy_Ip(torus, P, u).total, rel=1e-12)


_T = build_manifold(Torus4())
_S = build_manifold(Sphere4Radial(nodes=256))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(1e-3, 1e3), lam=st.floats(0.0, 5.0))
def test_rayleigh_scale_invariant(seed, t, lam):
    for d in (_T, _S):
        u = random_smooth_field(d, np.random.default_rng(seed), offset=0.3)
        a, b = rayleigh_J(d, u, lam), rayleigh_J(d, t * u, lam)
        assert abs(a - b) <= 1e-12 * abs(a)
