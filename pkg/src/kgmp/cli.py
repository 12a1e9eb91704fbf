"""Command-line experiment runner.

    kgmp <subcommand> --config <path> [--out <dir>] [--seed <u64>]

The config is an INI file with sections ``[manifold]``, ``[physics]``,
``[solver]`` and ``[experiment]``. Every subcommand writes ``summary.json``
(scalars, checks, params echo, version) plus its CSVs into the output
directory, and exits 0 iff all of its checks pass, 1 if one fails or a solver
gives up, 2 on a bad config.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import bubble_quotient_estimate, degenerate_family, expansion_check, phase_sweep
from .checks import gradient_suite, phi_suite, reduction_suite
from .elliptic import SolverError
from .functional import system_residual
from .manifold import FlatRadial4, Sphere4Radial, Torus4, build_manifold
from .mountain_pass import MPASettings, continuation_to_critical, mpa_solve, select_seed
from .phi_map import PhysicsParams
from .profiles import CONSTANTS, bubble_residual

log = logging.getLogger("kgmp")

SUBCOMMANDS = ("solve", "sweep", "continuation", "gradcheck", "bubble-check", "expansion",
               "constants", "degenerate")
VERSION = f"v{__version__}"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    manifold: object
    physics: PhysicsParams
    settings: MPASettings
    seed: int
    seed_strategy: str
    seed_height: float
    seed_eps: float
    experiment: dict
    echo: dict = field(default_factory=dict)


# -- parsing ---------------------------------------------------------------

def _get(cp, section, key, conv, default=None, required=False):
    path = f"{section}.{key}"
    if not cp.has_section(section) or not cp.has_option(section, key):
        if required:
            raise ConfigError(f"{path}: missing required value")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot parse {raw!r} ({exc})") from None


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    return int(s, 10)


def _floats(s):
    return [_float(t) for t in s.replace(",", " ").split()]


def _ints(s):
    return [_int(t) for t in s.replace(",", " ").split()]


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _tuple4(vals, path):
    if len(vals) == 1:
        return tuple(vals) * 4
    if len(vals) != 4:
        raise ConfigError(f"{path}: need 1 or 4 values, got {len(vals)}")
    return tuple(vals)


def _build(path, factory, **kw):
    try:
        return factory(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(path, seed_override=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    for sec in cp.sections():
        if sec not in ("manifold", "physics", "solver", "experiment"):
            raise ConfigError(f"{sec}: unknown section")

    kind = _get(cp, "manifold", "kind", str, required=True)
    if kind == "torus4":
        lengths = _tuple4(_get(cp, "manifold", "lengths", _floats, [2 * math.pi]), "manifold.lengths")
        nodes = _tuple4(_get(cp, "manifold", "nodes", _ints, [8]), "manifold.nodes")
        spec = _build("manifold", Torus4, lengths=lengths, nodes=nodes)
    elif kind == "sphere4_radial":
        spec = _build("manifold", Sphere4Radial, radius=_get(cp, "manifold", "radius", _float, 1.0),
                      nodes=_get(cp, "manifold", "nodes", _int, 512))
    elif kind == "flat4_radial":
        spec = _build("manifold", FlatRadial4, r_max=_get(cp, "manifold", "r_max", _float, 40.0),
                      nodes=_get(cp, "manifold", "nodes", _int, 4001))
    else:
        raise ConfigError(f"manifold.kind: unknown kind {kind!r} (torus4, sphere4_radial, flat4_radial)")

    phys = {k: _get(cp, "physics", k, _float, required=True) for k in ("q", "m0", "m1", "omega", "p")}
    physics = _build("physics", PhysicsParams, **phys)

    kw = {}
    for f in fields(MPASettings):
        conv = _int if f.type in ("int", int) else _float
        val = _get(cp, "solver", f.name, conv)
        if val is not None:
            kw[f.name] = val
    settings = _build("solver", MPASettings, **kw)
    seed = _get(cp, "solver", "seed", _int, 0)
    if seed_override is not None:
        seed = seed_override
    if not 0 <= seed < 2**64:
        raise ConfigError(f"solver.seed: must be an unsigned 64-bit integer, got {seed}")
    strategy = _get(cp, "solver", "seed_strategy", str, "constant_bump")
    if strategy not in ("constant_bump", "test_function"):
        raise ConfigError(f"solver.seed_strategy: unknown strategy {strategy!r}")
    height = _get(cp, "solver", "seed_height", _float, 1.0)
    if not height > 0:
        raise ConfigError("solver.seed_height: must be positive")
    seed_eps = _get(cp, "solver", "seed_eps", _float, 0.1)
    if not seed_eps > 0:
        raise ConfigError("solver.seed_eps: must be positive")

    exp = {}
    for key, conv in (("omega_list", _floats), ("omega_min", _float), ("omega_max", _float),
                      ("omega_count", _int), ("p", _float), ("p_list", _floats), ("eps_list", _floats),
                      ("lam_list", _floats), ("rho0", _float), ("n_fields", _int), ("n_pairs", _int),
                      ("bubble_nodes", _int), ("bubble_r_max", _float), ("quotient_nodes", _int),
                      ("out", str), ("write_fields", _bool)):
        val = _get(cp, "experiment", key, conv)
        if val is not None:
            exp[key] = val
    if cp.has_section("experiment"):
        for key in cp.options("experiment"):
            if key not in exp:
                raise ConfigError(f"experiment.{key}: unknown key")

    known = {
        "manifold": {"kind", "lengths", "nodes", "radius", "r_max"},
        "physics": {"q", "m0", "m1", "omega", "p"},
        "solver": {f.name for f in fields(MPASettings)} | {"seed", "seed_strategy", "seed_height", "seed_eps"},
    }
    for sec, keys in known.items():
        if cp.has_section(sec):
            for key in cp.options(sec):
                if key not in keys:
                    raise ConfigError(f"{sec}.{key}: unknown key")

    echo = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    echo.setdefault("solver", {})["seed"] = str(seed)
    return ExperimentConfig(spec, physics, settings, seed, strategy, height, seed_eps, exp, echo)


def _omega_grid(cfg: ExperimentConfig):
    exp = cfg.experiment
    if "omega_list" in exp:
        return exp["omega_list"]
    try:
        lo, hi, n = exp["omega_min"], exp["omega_max"], exp["omega_count"]
    except KeyError as exc:
        raise ConfigError(f"experiment.{exc.args[0]}: missing (or give experiment.omega_list)") from None
    if n < 1:
        raise ConfigError("experiment.omega_count: must be >= 1")
    grid = np.linspace(lo, hi, n)
    for w in grid:
        if not abs(w) < cfg.physics.m0:
            raise ConfigError(f"experiment.omega_min/omega_max: omega={w:g} outside (-m0, m0)")
    return grid.tolist()


def _require(cfg, key):
    if key not in cfg.experiment:
        raise ConfigError(f"experiment.{key}: missing required value")
    return cfg.experiment[key]


# -- output ----------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_fields(path: Path, d, u, v):
    if d.kind == "torus4":
        grids = [g.ravel() for g in np.meshgrid(*d.coords, indexing="ij")]
        header = ["index", "x1", "x2", "x3", "x4", "u", "v"]
    else:
        grids = [d.coords[0]]
        header = ["index", "r", "u", "v"]
    cols = grids + [np.ravel(u), np.ravel(v)]
    write_csv(path, header, ([i] + [c[i] for c in cols] for i in range(d.size)))


def write_summary(out: Path, cfg, command, scalars, checks, error=None):
    doc = {
        "version": VERSION,
        "command": command,
        "params": cfg.echo,
        "scalars": _clean(scalars),
        "checks": {k: bool(v) for k, v in checks.items()},
        "passed": error is None and all(checks.values()),
    }
    if error is not None:
        doc["error"] = error
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


# -- subcommands -----------------------------------------------------------

def _seed_field(cfg, d):
    return select_seed(d, cfg.physics, cfg.seed_strategy, height=cfg.seed_height, eps=cfg.seed_eps)


def _result_scalars(res):
    return {"c_p": res.c_p, "sup_u": res.sup_u, "min_u": float(np.min(res.u)), "mu": res.mu,
            "r1": res.residuals[0], "r2": res.residuals[1], "iterations": res.iterations,
            "sweeps": res.sweeps, "T0": res.T0, "is_constant": res.is_constant,
            "converged": res.converged, "grad_norm": res.grad_norm}


def cmd_solve(cfg, out):
    d = build_manifold(cfg.manifold)
    res = mpa_solve(d, cfg.physics, _seed_field(cfg, d), cfg.settings)
    if cfg.experiment.get("write_fields", True):
        write_fields(out / "fields.csv", d, res.u, res.v)
    write_csv(out / "path_max.csv", ["sweep", "path_max"], enumerate(res.path_max_history))
    s = _result_scalars(res)
    q = cfg.physics.q
    checks = {
        "converged": res.converged,
        "residuals": max(res.residuals) <= cfg.settings.residual_tol,
        "u_positive": float(np.min(res.u)) > 0,
        "v_bounds": bool(np.min(res.v) > 0 and np.max(res.v) < 1.0 / q),
        "c_p_positive": res.c_p > 0,
    }
    if cfg.physics.p == 4:
        s["mp_threshold"] = CONSTANTS.mp_threshold
        checks["below_threshold"] = res.c_p < CONSTANTS.mp_threshold
    return s, checks


def cmd_sweep(cfg, out):
    d = build_manifold(cfg.manifold)
    seed_kwargs = {"strategy": cfg.seed_strategy, "height": cfg.seed_height, "eps": cfg.seed_eps}
    rep = phase_sweep(d, cfg.physics, _omega_grid(cfg), p=cfg.experiment.get("p"), settings=cfg.settings,
                      seed_kwargs=seed_kwargs)
    write_csv(out / "sweep.csv", rep.CSV_COLUMNS,
              ([getattr(r, c) for c in rep.CSV_COLUMNS] for r in rep.rows))
    mx, med = rep.max_sup_u(), rep.median_sup_u()
    s = {"rows": len(rep.rows), "converged_rows": sum(r.converged for r in rep.rows),
         "max_sup_u": mx, "median_sup_u": med, "admissible_set": rep.admissible_set,
         "threshold_rows": sum(r.threshold_holds for r in rep.rows)}
    checks = {"all_converged": all(r.converged for r in rep.rows),
              "bounded": bool(np.isfinite(mx) and mx <= 3.0 * med)}
    return s, checks


def cmd_continuation(cfg, out):
    d = build_manifold(cfg.manifold)
    p_list = _require(cfg, "p_list")
    if any(b <= a for a, b in zip(p_list, p_list[1:])) or not all(2 < p <= 4 for p in p_list):
        raise ConfigError("experiment.p_list: must be ascending within (2, 4]")
    results = continuation_to_critical(d, cfg.physics, p_list, _seed_field(cfg, d), cfg.settings)
    rows = [(p, r.converged, r.c_p, r.sup_u, r.mu, r.residuals[0], r.residuals[1], r.iterations)
            for p, r in zip(p_list, results)]
    write_csv(out / "continuation.csv", ["p", "converged", "c_p", "sup_u", "mu", "r1", "r2", "iterations"], rows)
    s = {"steps": len(results), "requested": len(p_list),
         "final_p": p_list[len(results) - 1] if results else None,
         "final_c_p": results[-1].c_p if results else None,
         "final_sup_u": results[-1].sup_u if results else None}
    checks = {"completed": len(results) == len(p_list), "all_converged": all(r.converged for r in results)}
    return s, checks


def cmd_gradcheck(cfg, out):
    d = build_manifold(cfg.manifold)
    rng = np.random.default_rng(cfg.seed)
    rows = phi_suite(d, cfg.physics, rng, n_fields=cfg.experiment.get("n_fields", 100))
    rows += gradient_suite(d, cfg.physics, rng, n_pairs=cfg.experiment.get("n_pairs", 20))
    rows += reduction_suite(d, cfg.physics, rng, n_fields=cfg.experiment.get("n_pairs", 20))
    write_csv(out / "gradcheck.csv", ["check", "manifold", "sample", "value", "passed"],
              ([r.check, r.manifold, r.sample, r.value, r.passed] for r in rows))
    s, checks = {}, {}
    for name in sorted({r.check for r in rows}):
        sel = [r for r in rows if r.check == name]
        s[f"{name}_min"] = min(r.value for r in sel)
        s[f"{name}_max"] = max(r.value for r in sel)
        checks[name] = all(r.passed for r in sel)
    return s, checks


def cmd_bubble_check(cfg, out):
    n = cfg.experiment.get("bubble_nodes", 201)
    r_max = cfg.experiment.get("bubble_r_max", 10.0)
    if n < 5 or not r_max > 0:
        raise ConfigError("experiment.bubble_nodes/bubble_r_max: need >= 5 nodes and a positive radius")
    rows = []
    for k in range(3):
        m = (n - 1) * 2**k + 1
        r = np.linspace(0.0, r_max, m)
        rows.append((m, r[1] - r[0], bubble_residual(r)))
    orders = [math.log2(a[2] / b[2]) for a, b in zip(rows, rows[1:])]
    write_csv(out / "bubble.csv", ["nodes", "h", "residual"], rows)
    est, mu = bubble_quotient_estimate(nodes=cfg.experiment.get("quotient_nodes", 20001))
    flat = build_manifold(FlatRadial4(r_max=100.0, nodes=20001))
    U = 1.0 / (1.0 + flat.coords[0] ** 2 / 8.0)
    mass = flat.integrate(U**4)
    s = {"orders": orders, "min_order": min(orders), "quotient_estimate": est, "quotient_mu": mu,
         "inv_K4_sq": CONSTANTS.inv_K4_sq, "bubble_mass": mass, "bubble_mass_exact": CONSTANTS.bubble_mass}
    checks = {"order": min(orders) >= 1.8,
              "quotient": abs(est / CONSTANTS.inv_K4_sq - 1) <= 0.02,
              "mass": abs(mass / CONSTANTS.bubble_mass - 1) <= 1e-3}
    return s, checks


def cmd_expansion(cfg, out):
    d = build_manifold(cfg.manifold)
    eps = _require(cfg, "eps_list")
    lams = cfg.experiment.get("lam_list", [1.0, 3.0])
    critical = float(np.mean(d.scalar_curvature)) / 6.0
    rows, s, checks = [], {"critical_lambda": critical}, {}
    for lam in lams:
        rec = expansion_check(d, lam, eps, cfg.experiment.get("rho0"))
        rows += [(lam, e, J) for e, J in zip(rec.eps, rec.J_values)]
        tag = f"lam{lam:g}"
        s.update({f"{tag}_slope_sign": rec.slope_sign, f"{tag}_coef_log": rec.coef_log,
                  f"{tag}_limit_estimate": rec.limit_estimate, f"{tag}_J_min_eps": rec.J_values[-1],
                  f"{tag}_gradient_mass_ratio": rec.gradient_mass_ratio})
        checks[f"{tag}_sign"] = rec.slope_sign == int(np.sign(critical - lam))
        if lam < critical:
            checks[f"{tag}_below_sobolev"] = rec.J_values[-1] < CONSTANTS.inv_K4_sq
    write_csv(out / "expansion.csv", ["lambda", "eps", "J"], rows)
    return s, checks


def cmd_constants(cfg, out):
    s = CONSTANTS.as_dict()
    write_csv(out / "constants.csv", ["name", "value"], sorted(s.items()))
    closed = 8.0 * math.pi**2 / 3.0
    return s, {"mp_threshold": abs(s["mp_threshold"] - closed) <= 1e-9}


def cmd_degenerate(cfg, out):
    d = build_manifold(cfg.manifold)
    P = cfg.physics
    base = PhysicsParams(P.q, P.m0, P.m1, 0.0, P.p)
    rows = []
    for e in _require(cfg, "eps_list"):
        try:
            u, v, w2 = degenerate_family(e, P.q, P.m0, P.m1, P.p)
        except ValueError as exc:
            raise ConfigError(f"experiment.eps_list: {exc}") from None
        r1, r2 = system_residual(d, base, d.constant(u), d.constant(v), omega_sq=w2)
        gap = abs(w2 - P.m0**2)
        rows.append((e, u, v, w2, r1, r2, gap, 2.0 * e ** (P.p - 2)))
    write_csv(out / "degenerate.csv", ["eps", "u", "v", "omega_sq", "r1", "r2", "gap", "bound"], rows)
    s = {"max_residual": max(max(r[4], r[5]) for r in rows), "max_gap_ratio": max(r[6] / r[7] for r in rows)}
    checks = {"residuals": all(max(r[4], r[5]) <= 1e-12 for r in rows),
              "gap_bound": all(r[6] <= r[7] for r in rows)}
    return s, checks


COMMANDS = {
    "solve": cmd_solve, "sweep": cmd_sweep, "continuation": cmd_continuation, "gradcheck": cmd_gradcheck,
    "bubble-check": cmd_bubble_check, "expansion": cmd_expansion, "constants": cmd_constants,
    "degenerate": cmd_degenerate,
}


def _u64(s):
    v = int(s, 10)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="kgmp", description="Static Klein-Gordon-Maxwell-Proca numerical lab.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="INI file with [manifold] [physics] [solver] [experiment]")
    ap.add_argument("--out", help="output directory (default: experiment.out or ./kgmp_out)")
    ap.add_argument("--seed", type=_u64, help="overrides solver.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=VERSION)
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.seed)
        out = Path(args.out or cfg.experiment.get("out", "kgmp_out"))
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"kgmp: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"kgmp: cannot create output directory: {exc}", file=sys.stderr)
        return 2
    try:
        scalars, checks = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"kgmp: config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        partial = getattr(exc, "result", None)
        scalars = _result_scalars(partial) if partial is not None and hasattr(partial, "c_p") else {}
        scalars["mu_trajectory"] = list(getattr(exc, "mu_trajectory", []))
        write_summary(out, cfg, args.command, scalars, {}, error=f"{type(exc).__name__}: {exc}")
        print(f"kgmp: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    doc = write_summary(out, cfg, args.command, scalars, checks)
    for name, ok in doc["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"summary: {os.path.join(str(out), 'summary.json')}")
    return 0 if doc["passed"] else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
