"""Command-line front end: ``hartree-lab <subcommand> [flags]``.

Settings come from an optional TOML file (``--config``) with the tables
``grid``, ``model``, ``solver``, ``spectrum``, ``sweep``, ``heat``,
``critical`` and ``output``; flags override file values and
``HARTREE_LAB_OUT`` overrides the configured output directory.  Every run
writes ``manifest.json`` listing the files it produced.

Exit status: 0 success, 2 invalid input or failed validation, 3 solver
non-convergence, 4 inconclusive estimate.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import matplotlib
import numpy as np
import scipy

from . import __version__, plotting
from .errors import AmbiguousCount, HartreeLabError, Inconclusive, InvalidArgument, NoConvergence
from .grid import make_grid, profile_to_csv
from .limits import critical_mass_estimate, h1_uniform_check, richardson_gap, sweep_c, sweep_csv
from .linops import assemble_lminus, assemble_sector, eigs, k_ell_gap, kernel_count, perron_check
from .solve import ShootingParams, shoot_threshold, solve_nr, solve_nr_normalized, solve_rel
from .specfun import heat_kernel_sector, resolvent_mismatch
from .validation import run_suite

SUBCOMMANDS = ("solve-nr", "solve-rel", "shoot", "spectrum", "sweep-c", "heat-kernel", "critical-mass", "validate")
FORMATS = ("json", "csv", "png")
ENV_OUT = "HARTREE_LAB_OUT"

DEFAULTS = {
    "grid": {"n": 2000, "r_max": 30.0},
    "model": {"m": None, "c": None, "N": None, "multiplier": None},
    "solver": {"tol": 1e-10, "max_iter": 5000},
    "spectrum": {"l_max": 4, "k_eigs": 6, "kernel_radius": 1e-2},
    "sweep": {"c_list": [5.0, 10.0, 20.0, 40.0]},
    "heat": {"t": 0.5, "mu": 1.0},
    "critical": {"bracket_tol": 0.2},
    "output": {"dir": "hartree_lab_out", "formats": list(FORMATS)},
}

# flag dest -> (table, key)
FLAG_KEYS = {
    "n": ("grid", "n"),
    "r_max": ("grid", "r_max"),
    "m": ("model", "m"),
    "c": ("model", "c"),
    "N": ("model", "N"),
    "multiplier": ("model", "multiplier"),
    "tol": ("solver", "tol"),
    "max_iter": ("solver", "max_iter"),
    "l_max": ("spectrum", "l_max"),
    "k": ("spectrum", "k_eigs"),
    "kernel_radius": ("spectrum", "kernel_radius"),
    "c_list": ("sweep", "c_list"),
    "t": ("heat", "t"),
    "mu": ("heat", "mu"),
    "bracket_tol": ("critical", "bracket_tol"),
    "out": ("output", "dir"),
    "formats": ("output", "formats"),
}


class ConfigError(InvalidArgument):
    pass


class ValidationFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def merge_config(file_cfg: dict, overrides: dict) -> dict:
    """Defaults, then the file, then flags; unknown tables or keys are rejected."""
    cfg = copy.deepcopy(DEFAULTS)
    for table, values in file_cfg.items():
        if table not in cfg or not isinstance(values, dict):
            raise ConfigError(f"unknown config table {table!r}")
        for key, val in values.items():
            if key not in cfg[table]:
                raise ConfigError(f"unknown config key {table}.{key}")
            cfg[table][key] = val
    for dest, val in overrides.items():
        if val is not None:
            table, key = FLAG_KEYS[dest]
            cfg[table][key] = val
    env = os.environ.get(ENV_OUT)
    if env and overrides.get("out") is None:
        cfg["output"]["dir"] = env
    return cfg


def _positive(name, x):
    if not isinstance(x, (int, float)) or isinstance(x, bool) or not x > 0:
        raise ConfigError(f"{name} must be a positive number, got {x!r}")


def validate_config(cfg: dict, subcommand: str) -> dict:
    g = cfg["grid"]
    if not isinstance(g["n"], int) or isinstance(g["n"], bool) or g["n"] < 16:
        raise ConfigError(f"grid.n must be an integer >= 16, got {g['n']!r}")
    _positive("grid.r_max", g["r_max"])
    mdl = cfg["model"]
    for key in ("m", "c", "N", "multiplier"):
        if mdl[key] is not None:
            _positive(f"model.{key}", mdl[key])
    s = cfg["solver"]
    _positive("solver.tol", s["tol"])
    if not 1e-14 <= s["tol"] <= 1e-4:
        raise ConfigError("solver.tol must lie in [1e-14, 1e-4]")
    if not isinstance(s["max_iter"], int) or s["max_iter"] < 1:
        raise ConfigError("solver.max_iter must be a positive integer")
    sp = cfg["spectrum"]
    if not isinstance(sp["l_max"], int) or sp["l_max"] < 2:
        raise ConfigError("spectrum.l_max must be an integer >= 2")
    if not isinstance(sp["k_eigs"], int) or sp["k_eigs"] < 1:
        raise ConfigError("spectrum.k_eigs must be a positive integer")
    _positive("spectrum.kernel_radius", sp["kernel_radius"])
    cl = cfg["sweep"]["c_list"]
    if not isinstance(cl, list) or not cl:
        raise ConfigError("sweep.c_list must be a non-empty list")
    for c in cl:
        _positive("sweep.c_list entry", c)
    _positive("heat.t", cfg["heat"]["t"])
    _positive("heat.mu", cfg["heat"]["mu"])
    _positive("critical.bracket_tol", cfg["critical"]["bracket_tol"])
    fmts = cfg["output"]["formats"]
    if not isinstance(fmts, list) or not fmts or any(f not in FORMATS for f in fmts):
        raise ConfigError(f"output.formats must be a non-empty subset of {FORMATS}")
    if subcommand == "solve-rel" and (mdl["c"] is None or mdl["N"] is None):
        raise ConfigError("solve-rel needs model.c and model.N")
    if mdl["N"] is not None and mdl["multiplier"] is not None:
        raise ConfigError("give at most one of model.N and model.multiplier")
    return cfg


# ---------------------------------------------------------------------------
# output


class Writer:
    """Writes artifacts into one directory and remembers their names."""

    def __init__(self, out_dir, formats):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.formats = set(formats)
        self.outputs: list[str] = []

    def _record(self, name):
        self.outputs.append(name)
        return self.dir / name

    def json(self, name, obj):
        if "json" in self.formats:
            self._record(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def csv(self, name, text):
        if "csv" in self.formats:
            self._record(name).write_text(text)

    def png(self, name, draw, *args, **kw):
        if "png" in self.formats:
            draw(*args, path=self._record(name), **kw)

    def manifest(self, subcommand, cfg, wall_time, status):
        doc = {
            "subcommand": subcommand,
            "config": cfg,
            "versions": {
                "hartree_lab": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
            },
            "wall_time": wall_time,
            "status": status,
            "outputs": sorted(self.outputs),
        }
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# pipelines


def _grid(cfg):
    return make_grid(cfg["grid"]["n"], float(cfg["grid"]["r_max"]))


def _ground_state(cfg):
    """Relativistic if ``c`` and ``N`` are set, else nonrelativistic (normalized by default)."""
    mdl, s = cfg["model"], cfg["solver"]
    grid = _grid(cfg)
    kw = {"tol": s["tol"], "max_iter": s["max_iter"]}
    if mdl["c"] is not None and mdl["N"] is not None:
        return solve_rel(grid, float(mdl["m"] or 1.0), float(mdl["c"]), float(mdl["N"]), **kw)
    m = 0.5 if mdl["m"] is None else float(mdl["m"])
    if mdl["N"] is not None:
        return solve_nr(grid, m=m, N=float(mdl["N"]), **kw)
    lam = 1.0 if mdl["multiplier"] is None else float(mdl["multiplier"])
    if m == 0.5 and lam == 1.0:
        return solve_nr_normalized(grid, **kw)
    return solve_nr(grid, m=m, lam=lam, **kw)


def _emit_state(w: Writer, state, stem, title):
    w.json(f"{stem}.json", state.to_dict())
    w.csv(f"{stem}_profile.csv", profile_to_csv(state.Q))
    w.png(f"{stem}_profile.png", plotting.plot_profile, state.grid.nodes, state.Q.values, title=title)


def cmd_solve_nr(cfg, w: Writer, jobs):
    if cfg["model"]["c"] is not None:
        raise ConfigError("solve-nr takes no speed of light; use solve-rel")
    state = _ground_state(cfg)
    _emit_state(w, state, "ground_state", "nonrelativistic ground state")
    print(f"lambda = {state.multiplier!r}  N = {state.mass!r}  E = {state.energy!r}  residual = {state.residual:.3e}")


def cmd_solve_rel(cfg, w: Writer, jobs):
    mdl, s = cfg["model"], cfg["solver"]
    state = solve_rel(_grid(cfg), float(mdl["m"] or 1.0), float(mdl["c"]), float(mdl["N"]),
                      tol=s["tol"], max_iter=s["max_iter"])
    _emit_state(w, state, "ground_state", f"relativistic ground state, c = {mdl['c']:g}")
    print(f"mu = {state.multiplier!r}  N = {state.mass!r}  E = {state.energy!r}  residual = {state.residual:.3e}")


def cmd_shoot(cfg, w: Writer, jobs):
    res = shoot_threshold(ShootingParams())
    prof = res.normalized_profile(_grid(cfg))
    w.json("shoot.json", {
        "v0_lo": res.v0_lo, "v0_hi": res.v0_hi, "v0_star": res.v0_star, "lambda_v": res.lambda_v,
        "mass_v": res.mass_v, "kappa": res.kappa, "q0": res.q0, "trust_radius": res.trust_radius,
        "grid": prof.grid.to_dict(),
    })
    w.csv("shoot_trace.csv", _rows_csv(["v0", "outcome"], [[repr(v), o] for v, o in res.trace]))
    w.csv("shoot_profile.csv", profile_to_csv(prof))
    w.png("shoot_profile.png", plotting.plot_profile, prof.grid.nodes, prof.values, title="shooting threshold profile")
    print(f"v0* = {res.v0_star!r}  Q(0) = {res.q0!r}  mass = {res.mass_v / res.kappa!r}")


def cmd_spectrum(cfg, w: Writer, jobs):
    sp = cfg["spectrum"]
    state = _ground_state(cfg)
    _emit_state(w, state, "ground_state", "ground state")
    spectra, rows = {}, []
    for ell in range(sp["l_max"] + 1):
        rep = eigs(assemble_sector(ell, state), k=sp["k_eigs"])
        if ell >= 2 and not state.params.relativistic:
            rep = type(rep)(rep.ell, rep.kind, rep.eigenvalues, rep.ground_eigenfunction, rep.sign_definite,
                            k_ell_gap(ell, state, rep.ground_eigenfunction), rep.count_in_unit_interval,
                            rep.eigenfunctions)
        d = rep.to_dict()
        d["perron"], d["perron_margin"] = perron_check(rep)
        w.json(f"spectrum_l{ell}.json", d)
        w.csv(f"eigenfunctions_l{ell}.csv", rep.eigenfunctions_csv())
        spectra[ell] = [float(e) for e in rep.eigenvalues]
        rows += [[ell, rep.kind, k, repr(float(e))] for k, e in enumerate(rep.eigenvalues)]
    if not state.params.relativistic:
        lm = eigs(assemble_lminus(state), k=sp["k_eigs"])
        w.json("spectrum_lminus.json", lm.to_dict())
        rows += [[0, lm.kind, k, repr(float(e))] for k, e in enumerate(lm.eigenvalues)]
    per = {}
    count = kernel_count(state, sp["l_max"], sp["kernel_radius"], jobs=jobs, per_sector=per)
    w.json("kernel_count.json", {"kernel_count": count, "per_sector": {str(k): v for k, v in per.items()},
                                 "l_max": sp["l_max"], "r0": sp["kernel_radius"]})
    w.csv("eigenvalues.csv", _rows_csv(["ell", "kind", "index", "eigenvalue"], rows))
    thr = state.multiplier + (state.params.m * state.params.c**2 if state.params.relativistic else 0.0)
    w.png("spectrum.png", plotting.plot_spectrum, spectra, threshold=thr)
    print(f"kernel_count = {count}")


def cmd_sweep_c(cfg, w: Writer, jobs):
    mdl, s = cfg["model"], cfg["solver"]
    m = float(mdl["m"] or 1.0)
    N = float(mdl["N"] or 1.0)
    records, ref = sweep_c(cfg["sweep"]["c_list"], m, N, _grid(cfg), tol=s["tol"], jobs=jobs)
    lam = ref.multiplier
    good = [r for r in records if r.ok]
    doc = {"m": m, "N": N, "lambda": lam, "E_nr": ref.energy, "records": [r.to_dict() for r in records]}
    if good:
        doc["h1_uniform_ok"], doc["M"] = h1_uniform_check(good)
    if len(good) >= 2:
        doc["richardson_gap"] = richardson_gap(records)
    w.json("sweep.json", doc)
    w.csv("sweep.csv", sweep_csv(records))
    w.png("sweep.png", plotting.plot_sweep, [r.c for r in good], [abs(r.gap + lam) for r in good],
          [r.h1_dist for r in good])
    for r in records:
        print(f"c = {r.c:g}: " + (f"gap + lambda = {r.gap + lam:.3e}  h1_dist = {r.h1_dist:.3e}" if r.ok else r.error))
    if len(good) < len(records):
        raise NoConvergence(f"{len(records) - len(good)} sweep point(s) failed")


def cmd_heat_kernel(cfg, w: Writer, jobs):
    grid, hk = _grid(cfg), cfg["heat"]
    t, mu = float(hk["t"]), float(hk["mu"])
    inner = grid.nodes <= 0.5 * grid.r_max
    rows, curves = [], {}
    for ell in range(cfg["spectrum"]["l_max"] + 1):
        a = heat_kernel_sector(ell, t, grid)
        b = heat_kernel_sector(ell, 2.0 * t, grid)
        kmin = float(min(a.kernel().min(), b.kernel().min()))
        k1 = b.matrix[np.ix_(inner, inner)]
        semi = float(np.max(np.abs((a.matrix @ a.matrix)[np.ix_(inner, inner)] - k1)) / np.max(np.abs(k1)))
        res = resolvent_mismatch(ell, mu, grid)
        rows.append([ell, repr(kmin), repr(semi), repr(res)])
        curves[f"l = {ell}"] = a.kernel()[grid.n // 4]
    w.csv("heat_kernel.csv", _rows_csv(["ell", "min_entry", "semigroup_defect", "resolvent_error"], rows))
    w.json("heat_kernel.json", {"t": t, "mu": mu, "grid": grid.to_dict(),
                                "sectors": [dict(zip(("ell", "min_entry", "semigroup_defect", "resolvent_error"),
                                                     [r[0]] + [float(x) for x in r[1:]])) for r in rows]})
    w.png("heat_kernel.png", plotting.plot_profiles, grid.nodes, curves, ylabel=f"kernel row at r = {grid.nodes[grid.n // 4]:.3g}",
          logy=True)
    for r in rows:
        print(f"l = {r[0]}: min entry {float(r[1]):.3e}  semigroup {float(r[2]):.2e}  resolvent {float(r[3]):.2e}")


def cmd_critical_mass(cfg, w: Writer, jobs):
    mdl = cfg["model"]
    grid = make_grid(cfg["grid"]["n"], float(cfg["grid"]["r_max"]))
    est = critical_mass_estimate(float(mdl["c"] or 1.0), float(mdl["m"] or 1.0), grid,
                                 float(cfg["critical"]["bracket_tol"]), tol=max(cfg["solver"]["tol"], 1e-9))
    w.json("critical_mass.json", est.to_dict())
    w.csv("critical_mass_trace.csv", _rows_csv(["N", "outcome"], [[repr(N), o] for N, o in est.trace]))
    w.png("critical_mass.png", plotting.plot_bracket, est.trace)
    print(f"N_* in [{est.N_lo!r}, {est.N_hi!r}]  (c = {est.c:g}, m = {est.m:g})")


def cmd_validate(cfg, w: Writer, jobs):
    sp = cfg["spectrum"]
    checks = run_suite(_grid(cfg), sp["l_max"], sp["kernel_radius"], tuple(cfg["sweep"]["c_list"]), jobs)
    rows = [c.row() for c in checks]
    w.csv("validate.csv", _rows_csv(["check", "result", "value", "bound"], rows))
    w.json("validate.json", [dict(zip(("check", "result", "value", "bound"), r)) for r in rows])
    width = max(len(r[0]) for r in rows)
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]}  {r[2]}  ({r[3]})")
    failed = [c.name for c in checks if not c.ok]
    if failed:
        raise ValidationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")


COMMANDS = {
    "solve-nr": cmd_solve_nr,
    "solve-rel": cmd_solve_rel,
    "shoot": cmd_shoot,
    "spectrum": cmd_spectrum,
    "sweep-c": cmd_sweep_c,
    "heat-kernel": cmd_heat_kernel,
    "critical-mass": cmd_critical_mass,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# entry point


def _formats(text):
    return [f.strip() for f in text.split(",") if f.strip()]


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--out", help="output directory (overrides config and $%s)" % ENV_OUT)
    common.add_argument("--formats", type=_formats, help="comma-separated subset of json,csv,png")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for independent jobs")
    common.add_argument("--n", type=int, help="interior grid nodes")
    common.add_argument("--r-max", dest="r_max", type=float, help="grid radius")
    common.add_argument("--m", type=float, help="mass parameter")
    common.add_argument("--c", type=float, help="speed of light")
    common.add_argument("--N", type=float, help="target L2 mass")
    common.add_argument("--multiplier", type=float, help="Lagrange multiplier instead of a mass")
    common.add_argument("--tol", type=float, help="solver residual tolerance")
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--l-max", dest="l_max", type=int)
    common.add_argument("--k", type=int, help="eigenvalues per sector")
    common.add_argument("--kernel-radius", dest="kernel_radius", type=float)
    common.add_argument("--c-list", dest="c_list", type=_floats, help="comma-separated speeds of light")
    common.add_argument("--t", type=float, help="heat-kernel time")
    common.add_argument("--mu", type=float, help="resolvent shift")
    common.add_argument("--bracket-tol", dest="bracket_tol", type=float)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="hartree-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hartree-lab {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def run(subcommand: str, cfg: dict, jobs: int = 1) -> int:
    """Execute one pipeline on a merged config; returns the exit status."""
    t0 = time.perf_counter()
    status = 0
    try:
        validate_config(cfg, subcommand)
        w = Writer(cfg["output"]["dir"], cfg["output"]["formats"])
    except InvalidArgument as exc:
        print(f"hartree-lab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[subcommand](cfg, w, jobs)
    except ValidationFailed as exc:
        print(f"hartree-lab: validation failed: {exc}", file=sys.stderr)
        status = 2
    except InvalidArgument as exc:
        print(f"hartree-lab: invalid input: {exc}", file=sys.stderr)
        status = 2
    except (Inconclusive, AmbiguousCount) as exc:
        print(f"hartree-lab: inconclusive: {exc}", file=sys.stderr)
        status = 4
    except (NoConvergence, HartreeLabError) as exc:
        print(f"hartree-lab: solver failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = 3
    w.manifest(subcommand, cfg, time.perf_counter() - t0, status)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("hartree-lab: --jobs must be positive", file=sys.stderr)
        return 2
    try:
        file_cfg = load_config(args.config) if args.config else {}
        cfg = merge_config(file_cfg, {k: getattr(args, k) for k in FLAG_KEYS})
    except (OSError, InvalidArgument) as exc:
        print(f"hartree-lab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return run(args.subcommand, cfg, args.jobs)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
