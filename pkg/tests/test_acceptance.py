"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines appear even without ``-s``.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from kgmp import checks
from kgmp.analysis import bubble_quotient_estimate, degenerate_family, expansion_check, phase_sweep
from kgmp.cli import run
from kgmp.functional import system_residual
from kgmp.manifold import Sphere4Radial, Torus4, build_manifold
from kgmp.mountain_pass import mpa_solve, select_seed
from kgmp.phi_map import PhysicsParams
from kgmp.profiles import CONSTANTS, bubble_residual, test_function as truncated_bubble

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed, limit):
        ok = ok and elapsed < limit
        with capsys.disabled():
            print(f"\nCRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {limit:g}s]")
        return ok
    return emit


def test_criterion_01_constants(report):
    t = time.perf_counter()
    closed = 8 * math.pi**2 / 3
    est, mu = bubble_quotient_estimate(r_max=40.0, nodes=20001)
    gap_mp = abs(CONSTANTS.mp_threshold - closed)
    rel = abs(est / CONSTANTS.inv_K4_sq - 1)
    ok = gap_mp <= 1e-9 and rel <= 0.02
    assert report(1, ok, f"mp_threshold={CONSTANTS.mp_threshold:.12f} (|err|={gap_mp:.1e}); "
                         f"J estimate {est:.5f} vs 1/K4^2={CONSTANTS.inv_K4_sq:.5f} (rel {rel:.1e})",
                  time.perf_counter() - t, 10)


def test_criterion_02_bubble_identity(report):
    t = time.perf_counter()
    errs = [bubble_residual(np.linspace(0.0, 10.0, n)) for n in (201, 401, 801)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = min(orders) >= 1.8
    assert report(2, ok, f"residuals {', '.join(f'{e:.2e}' for e in errs)}; orders "
                         f"{', '.join(f'{o:.3f}' for o in orders)}", time.perf_counter() - t, 5)


def test_criterion_03_gradient_mass_ratio(report):
    t = time.perf_counter()
    d = build_manifold(Sphere4Radial(nodes=4097))
    u = truncated_bubble(d, 0.02, 1.0)
    ratio = d.integrate(u * d.laplacian(u)) / d.integrate(u**4)
    ok = 8 * 0.98 <= ratio <= 8 * 1.02
    assert report(3, ok, f"int|grad u|^2 / int u^4 = {ratio:.5f} (eps=0.02, rho0=1, N_r=4097)",
                  time.perf_counter() - t, 10)


def test_criterion_04_expansion(report):
    t = time.perf_counter()
    d = build_manifold(Sphere4Radial(nodes=16385))
    eps = [0.2, 0.1, 0.05, 0.02]
    crit = float(np.mean(d.scalar_curvature)) / 6
    low = expansion_check(d, 1.0, eps, rho0=1.0)
    high = expansion_check(d, 3.0, eps, rho0=1.0)
    ok = (low.J_values[-1] < CONSTANTS.inv_K4_sq and low.slope_sign == np.sign(crit - 1.0)
          and high.slope_sign == np.sign(crit - 3.0))
    assert report(4, ok, f"lam=1: J(0.02)={low.J_values[-1]:.5f} < {CONSTANTS.inv_K4_sq:.5f}, "
                         f"eps^2 ln eps coef {low.coef_log:+.3f}; lam=3: coef {high.coef_log:+.3f}",
                  time.perf_counter() - t, 30)


def _summarize(rows):
    by = {}
    for r in rows:
        by.setdefault(r.check, []).append(r)
    return by


def test_criterion_05_phi_suite(report):
    t = time.perf_counter()
    params = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=4.0)
    parts, ok = [], True
    for spec in (Torus4(), Sphere4Radial()):
        d = build_manifold(spec)
        rows = checks.phi_suite(d, params, np.random.default_rng(2024), n_fields=100, n_derivative=100)
        by = _summarize(rows)
        ok &= all(r.passed for r in rows)
        parts.append(f"{d.kind}: Phi in [{min(r.value for r in by['phi_lower']):.3f}, "
                     f"{max(r.value for r in by['phi_upper']):.3f}], "
                     f"min DPhi order {min(r.value for r in by['dphi_order']):.3f}, "
                     f"min DPsi order {min(r.value for r in by['dpsi_order']):.3f}, "
                     f"max Psi gap {max(r.value for r in by['psi_forms']):.1e}")
    assert report(5, ok, "; ".join(parts), time.perf_counter() - t, 60)


def test_criterion_06_reduction(report):
    t = time.perf_counter()
    params = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=4.0)
    worst, ok = 0.0, True
    for spec in (Torus4(), Sphere4Radial()):
        rows = checks.reduction_suite(build_manifold(spec), params, np.random.default_rng(6), n_fields=20)
        ok &= all(r.passed for r in rows)
        worst = max(worst, max(r.value for r in rows))
    assert report(6, ok, f"max |S(u,Phi(u)) - I_p(u)|/|I_p(u)| = {worst:.1e} over 2 x 20 fields",
                  time.perf_counter() - t, 20)


def test_criterion_07_gradient(report):
    t = time.perf_counter()
    params = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=4.0)
    parts, ok = [], True
    for spec in (Torus4(), Sphere4Radial()):
        d = build_manifold(spec)
        rows = checks.gradient_suite(d, params, np.random.default_rng(7), n_pairs=20)
        ok &= all(r.passed for r in rows)
        parts.append(f"{d.kind}: " + ", ".join(f"{k[len('grad_order_'):]} min {min(r.value for r in v):.3f}"
                                              for k, v in _summarize(rows).items()))
    assert report(7, ok, "; ".join(parts), time.perf_counter() - t, 60)


def test_criterion_08_torus_existence(report):
    t = time.perf_counter()
    d = build_manifold(Torus4())
    P = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=3.0)
    res = mpa_solve(d, P, select_seed(d, P, "constant_bump"))
    ok = (res.converged and max(res.residuals) <= 1e-6 and res.u.min() > 0
          and 0 < res.v.min() and res.v.max() < 1 / P.q and res.c_p > 0)
    assert report(8, ok, f"c_p={res.c_p:.6f}, r1={res.residuals[0]:.1e}, r2={res.residuals[1]:.1e}, "
                         f"min u={res.u.min():.5f}, v in [{res.v.min():.4f}, {res.v.max():.4f}]",
                  time.perf_counter() - t, 300)


def test_criterion_09_sphere_critical(report):
    t = time.perf_counter()
    d = build_manifold(Sphere4Radial(nodes=512))
    P = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.5, p=4.0)
    res = mpa_solve(d, P, select_seed(d, P, "test_function", eps=0.1))
    ok = res.converged and max(res.residuals) <= 1e-6 and res.c_p < CONSTANTS.mp_threshold - 0.1
    assert report(9, ok, f"c_p={res.c_p:.6f} < {CONSTANTS.mp_threshold - 0.1:.4f}, "
                         f"r1={res.residuals[0]:.1e}, r2={res.residuals[1]:.1e}, sup u={res.sup_u:.5f}",
                  time.perf_counter() - t, 300)


def test_criterion_10_degenerate(report):
    t = time.perf_counter()
    d = build_manifold(Torus4())
    P = PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.0, p=4.0)
    worst_r, worst_gap, ok = 0.0, 0.0, True
    for eps in (0.2, 0.1, 0.05, 0.01):
        u, v, w2 = degenerate_family(eps, P.q, P.m0, P.m1, P.p)
        r1, r2 = system_residual(d, P, d.constant(u), d.constant(v), omega_sq=w2)
        gap = abs(w2 - P.m0**2)
        ok &= max(r1, r2) <= 1e-12 and gap <= 2 * eps ** (P.p - 2)
        worst_r = max(worst_r, r1, r2)
        worst_gap = max(worst_gap, gap / (2 * eps ** (P.p - 2)))
    assert report(10, ok, f"max residual {worst_r:.1e}; max |omega^2 - m0^2| / (2 eps^(p-2)) = {worst_gap:.3f}",
                  time.perf_counter() - t, 5)


def test_criterion_11_phase_sweeps(report):
    t = time.perf_counter()
    torus = build_manifold(Torus4())
    rep_t = phase_sweep(torus, PhysicsParams(q=1.0, m0=1.0, m1=1.0, omega=0.0, p=3.0),
                        np.linspace(-0.95, 0.95, 11))
    sphere = build_manifold(Sphere4Radial())
    m0 = 1.2
    rep_s = phase_sweep(sphere, PhysicsParams(q=1.0, m0=m0, m1=1.0, omega=0.0, p=4.0),
                        np.linspace(0.9 * m0, 0.99 * m0, 11),
                        seed_kwargs={"strategy": "test_function", "eps": 0.1})
    ok = True
    parts = []
    for name, rep in (("torus p=3", rep_t), ("S4 p=4", rep_s)):
        conv = all(r.converged for r in rep.rows)
        mx, med = rep.max_sup_u(), rep.median_sup_u()
        ok &= conv and mx <= 3 * med
        parts.append(f"{name}: {sum(r.converged for r in rep.rows)}/{len(rep.rows)} converged, "
                     f"max sup u {mx:.4f}, median {med:.4f}")
    ok &= all(r.threshold_holds for r in rep_s.rows)
    assert report(11, ok, "; ".join(parts), time.perf_counter() - t, 1800)


def test_criterion_12_determinism(report, tmp_path):
    t = time.perf_counter()
    cfg = str(CONFIGS / "torus_solve.ini")
    blocks, files = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = run(["solve", "--config", cfg, "--out", str(out), "--seed", "42"])
        raw = (out / "summary.json").read_bytes()
        files.append(raw)
        blocks.append((code, json.dumps(json.loads(raw)["scalars"], sort_keys=True).encode()))
    ok = blocks[0][0] == 0 and blocks[0] == blocks[1] and files[0] == files[1]
    assert report(12, ok, f"exit codes {blocks[0][0]}, {blocks[1][0]}; scalar blocks identical: "
                          f"{blocks[0][1] == blocks[1][1]}; summary.json identical: {files[0] == files[1]}",
                  time.perf_counter() - t, 600)
