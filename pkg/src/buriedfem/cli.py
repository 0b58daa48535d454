"""Config-driven scenario runner.

A config is a TOML file with global settings and a list of ``[[scenario]]`` tables.  Every
subcommand except ``run`` and ``compare`` builds a one-scenario config from its arguments,
so all paths share the same pipeline and report format.  Exit codes: 0 all hard checks
pass, 1 a hard check failed (or ``compare`` found differences), 2 invalid input, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli

from . import io
from .coefficients import (CoefficientField, check_iota_invariance, ellipticity_constant,
                           mirror_extend, perturb, spd_matrix, spectral_sup)
from .errors import BuriedFemError, SchemaError, SolverError
from .fem import (RhsFunctional, apply_bc, assemble, dual_norm, localize, residual, solve,
                  spectral_norm)
from .geometry.catalog import CATALOG, SlitKind, build_constellation, symmetric_slit_constellations
from .geometry.mesh import build_mesh
from .regularity import convergence_study, estimate_exponent, observed_rates
from .symmetry import solve_via_symmetry
from .transforms import (IOTA, build_l_map, form_identity_defects, l_map_source_mesh,
                         linear_map, straighten_slit_triangle)

SCHEMA_VERSION = 1
CHECKS = ("solve", "symmetry", "transform", "exponent", "convergence", "localization",
          "perturbation")
TRANSFORMS = ("iota", "diag", "l_map", "sigma2")
ENV_OUT_DIR = "BURIEDFEM_OUT_DIR"
ENV_THREADS = "BURIEDFEM_THREADS"

# every default in one place
DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "out_dir": "out",
    "threads": 1,
    "scenario": [],
}
SCENARIO_DEFAULTS: dict[str, Any] = {
    "name": None,               # defaults to the constellation name
    "constellation": None,
    "levels": [8],
    "checks": ["solve"],
    "tol": 1e-10,
    "vtk": True,
    "coefficient": {"kind": "identity"},  # identity | constant | mirror | regions
    "rhs": {"density": 1.0},
    "transforms": list(TRANSFORMS),
    "transform_pairs": 50,
    "exponent": {"method": "two_term"},
    "convergence": {"local_radius": 0.25},
    "localization": {"center": [0.0, 0.0, 0.0], "radius": 0.75},
    "perturbation": {"relative_size": 0.05, "samples": 1},
    "expect": {},
}
EXPECT_KEYS = ("lambda", "q_star", "rate", "symmetry_h1", "transform", "lambda_shift",
               "localization_order")


class ValidationError(BuriedFemError):
    """Invalid config; the message carries the offending field path or TOML position."""


# ---------------------------------------------------------------- config

def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise ValidationError(f"{where}: {msg}")


def _matrix(entries, where: str) -> np.ndarray:
    try:
        return spd_matrix(entries)
    except (ValueError, TypeError, BuriedFemError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def resolve_config(raw: dict, overrides: Optional[dict] = None) -> dict:
    """Defaults, then the file, then environment, then command-line overrides; validated."""
    unknown = set(raw) - set(DEFAULTS)
    _require(not unknown, "config", f"unknown keys {sorted(unknown)}")
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "scenario"})
    if os.environ.get(ENV_OUT_DIR):
        cfg["out_dir"] = os.environ[ENV_OUT_DIR]
    if os.environ.get(ENV_THREADS):
        try:
            cfg["threads"] = int(os.environ[ENV_THREADS])
        except ValueError:
            raise ValidationError(f"{ENV_THREADS}: not an integer") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    _require(cfg["schema_version"] == SCHEMA_VERSION, "schema_version",
             f"expected {SCHEMA_VERSION}, got {cfg['schema_version']!r}")
    _require(isinstance(cfg["seed"], int), "seed", "must be an integer")
    _require(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads",
             "must be a positive integer")
    scenarios = raw.get("scenario", [])
    _require(isinstance(scenarios, list) and len(scenarios) > 0, "scenario",
             "at least one [[scenario]] table is required")
    cfg["scenario"] = [_resolve_scenario(s, f"scenario[{i}]") for i, s in enumerate(scenarios)]
    names = [s["name"] for s in cfg["scenario"]]
    _require(len(set(names)) == len(names), "scenario", f"duplicate names in {names}")
    return cfg


def _resolve_scenario(s: dict, where: str) -> dict:
    _require(isinstance(s, dict), where, "must be a table")
    unknown = set(s) - set(SCENARIO_DEFAULTS)
    _require(not unknown, where, f"unknown keys {sorted(unknown)}")
    sc = _merge(SCENARIO_DEFAULTS, s)
    name = sc["constellation"]
    _require(isinstance(name, str), f"{where}.constellation", "is required")
    _require(name in CATALOG, f"{where}.constellation",
             f"unknown constellation {name!r}; see list-constellations")
    sc["name"] = sc["name"] or name
    lv = sc["levels"]
    _require(isinstance(lv, list) and lv and all(isinstance(n, int) and n >= 2 and n % 2 == 0
                                                for n in lv),
             f"{where}.levels", "must be a non-empty list of even integers >= 2")
    _require(all(b > a for a, b in zip(lv, lv[1:])), f"{where}.levels", "must be increasing")
    bad = [c for c in sc["checks"] if c not in CHECKS]
    _require(not bad, f"{where}.checks", f"unknown checks {bad}; choose from {list(CHECKS)}")
    _require(isinstance(sc["tol"], float) and 1e-14 <= sc["tol"] <= 1e-6, f"{where}.tol",
             "must be a float in [1e-14, 1e-6]")
    bad = [t for t in sc["transforms"] if t not in TRANSFORMS]
    _require(not bad, f"{where}.transforms", f"unknown maps {bad}")
    c = CATALOG[name]
    if "symmetry" in sc["checks"]:
        _require(c.name in {x.name for x in symmetric_slit_constellations()}, f"{where}.checks",
                 f"symmetry check needs a symmetric slit constellation, not {name!r}")
    if "convergence" in sc["checks"]:
        _require(len(lv) >= 3 and all(b == 2 * a for a, b in zip(lv, lv[1:])),
                 f"{where}.levels", "convergence needs >= 3 levels, each doubling the last")
    if "localization" in sc["checks"]:
        _require(len(lv) >= 3, f"{where}.levels", "localization needs >= 3 levels")
    _validate_coefficient(sc["coefficient"], f"{where}.coefficient")
    rhs = sc["rhs"]
    _require(set(rhs) <= {"density", "flux"}, f"{where}.rhs", "keys are density and flux")
    _require(isinstance(rhs.get("density", 0.0), (int, float)), f"{where}.rhs.density",
             "must be a number")
    if "flux" in rhs:
        _require(isinstance(rhs["flux"], list) and len(rhs["flux"]) == 3, f"{where}.rhs.flux",
                 "must be a 3-vector")
    _require(set(sc["expect"]) <= set(EXPECT_KEYS), f"{where}.expect",
             f"known keys are {list(EXPECT_KEYS)}")
    for k in ("lambda", "q_star", "rate"):
        if k in sc["expect"]:
            v = sc["expect"][k]
            _require(isinstance(v, list) and len(v) == 2 and v[0] <= v[1],
                     f"{where}.expect.{k}", "must be an interval [lo, hi]")
    _require(sc["exponent"].get("method") in ("two_term", "plain"), f"{where}.exponent.method",
             "must be 'two_term' or 'plain'")
    return sc


def _validate_coefficient(spec: dict, where: str):
    kind = spec.get("kind")
    _require(kind in ("identity", "constant", "mirror", "regions"), f"{where}.kind",
             "must be identity, constant, mirror or regions")
    if kind in ("constant", "mirror"):
        _require("matrix" in spec, f"{where}.matrix", "is required")
        _matrix(spec["matrix"], f"{where}.matrix")
    if kind == "regions":
        regs = spec.get("regions")
        _require(isinstance(regs, list) and regs, f"{where}.regions", "must be a list of tables")
        for i, r in enumerate(regs):
            _require(isinstance(r, dict) and "label" in r and "matrix" in r,
                     f"{where}.regions[{i}]", "needs label and matrix")
            _matrix(r["matrix"], f"{where}.regions[{i}].matrix")


def build_coefficient(spec: dict, mesh) -> CoefficientField:
    kind = spec["kind"]
    if kind == "identity":
        return CoefficientField.identity(mesh)
    if kind == "constant":
        return CoefficientField.constant(spd_matrix(spec["matrix"]), mesh)
    if kind == "mirror":
        return mirror_extend(spd_matrix(spec["matrix"]), mesh)
    field = CoefficientField.from_dict({"regions": spec["regions"]})
    return CoefficientField({r: field[r] for r in mesh.present_regions()})


def build_rhs(spec: dict) -> RhsFunctional:
    flux = spec.get("flux")
    return RhsFunctional(density=float(spec.get("density", 0.0)),
                         flux=None if flux is None else np.asarray(flux, float))


# ---------------------------------------------------------------- checks

def _check(report: dict, name: str, ok: bool, detail: str):
    report.setdefault("checks", {})[name] = {"pass": bool(ok), "detail": detail}


def _within(v: float, interval) -> bool:
    return interval[0] <= v <= interval[1]


def run_scenario(sc: dict, seed: int, out_dir: Path) -> dict:
    c = build_constellation(sc["constellation"])
    f = build_rhs(sc["rhs"])
    expect = sc["expect"]
    rep: dict[str, Any] = {"scenario": sc["name"], "constellation": c.name,
                           "classification": c.classification.value, "seed": seed,
                           "warnings": []}
    n_fine = sc["levels"][-1]
    tol = sc["tol"]
    checks = sc["checks"]

    if "solve" in checks:
        levels = []
        for n in sc["levels"]:
            mesh = build_mesh(c, n)
            rho = build_coefficient(sc["coefficient"], mesh)
            red = apply_bc(assemble(mesh, rho))
            b = f.load_vector(mesh)
            sol = solve(red, b, tol)
            res = residual(sol.u, red, b)
            levels.append({"n": n, "h": mesh.h, "tets": mesh.n_tets,
                           "vertices": mesh.n_vertices, "iterations": sol.iterations,
                           "residual": res, "energy": math.fsum((b * sol.u).tolist()),
                           "coefficient_hash": rho.digest()})
            if sc["vtk"]:
                stem = out_dir / f"{sc['name']}_n{n}"
                io.write_vtk(f"{stem}.vtk", mesh, {"u": sol.u})
                io.write_surface_vtk(f"{stem}_boundary.vtk", mesh)
        rep["solve"] = levels
        _check(rep, "solve", all(l["residual"] <= 10 * tol for l in levels),
               "relative residual below 10 tol on every level")

    if "symmetry" in checks:
        thr = expect.get("symmetry_h1", 1e-8)
        rows = []
        for n in sc["levels"]:
            mesh = build_mesh(c, n)
            rho = build_coefficient(sc["coefficient"], mesh)
            red = apply_bc(assemble(mesh, rho))
            direct = solve(red, f.load_vector(mesh), tol).u
            _, srep = solve_via_symmetry(c, mesh, rho, f, tol, direct=direct)
            rows.append({"n": n, **srep.to_dict()})
        rep["symmetry"] = rows
        _check(rep, "symmetry", all(r["reconstruction_error"] <= thr for r in rows),
               f"relative H1 difference half/full <= {thr:g}")

    if "transform" in checks:
        thr = expect.get("transform", 1e-10)
        rng = np.random.default_rng(seed)
        n = sc["levels"][0]
        rows = {}
        for name in sc["transforms"]:
            m, mesh = _transform_case(name, c, n)
            rho = _transform_coefficient(sc["coefficient"], mesh)
            d = form_identity_defects(m, mesh, rho, sc["transform_pairs"], rng)
            rows[name] = {"max_defect": float(d.max()), "pairs": len(d), "n": n}
        rep["transform"] = rows
        _check(rep, "transform", all(r["max_defect"] <= thr for r in rows.values()),
               f"relative form defect <= {thr:g}")

    if "exponent" in checks:
        mesh = build_mesh(c, n_fine)
        rho = build_coefficient(sc["coefficient"], mesh)
        er = estimate_exponent(c, n_fine, rho, f, tol, sc["exponent"]["method"], mesh=mesh)
        rep["exponent"] = er.to_dict()
        if er.fit.unreliable:
            rep["warnings"].append("exponent fit flagged unreliable")
        ok = True
        if "lambda" in expect:
            ok &= _within(er.lam, expect["lambda"])
        if "q_star" in expect:
            ok &= _within(er.q_star, expect["q_star"])
        _check(rep, "exponent", ok, f"lambda in {expect.get('lambda')}, "
               f"q* in {expect.get('q_star')}")

    if "convergence" in checks:
        rho_spec = sc["coefficient"]
        rho = None
        if rho_spec["kind"] != "identity":
            rho = build_coefficient(rho_spec, build_mesh(c, sc["levels"][0]))
        table = convergence_study(c, rho, f, sc["levels"],
                                  local_radius=sc["convergence"].get("local_radius"), tol=tol)
        rep["convergence"] = table.to_dict()
        ok = True
        if "rate" in expect:
            ok = all(_within(r, expect["rate"]) for r in table.rates)
        _check(rep, "convergence", ok, f"rates in {expect.get('rate')}")

    if "localization" in checks:
        rows = localization_residuals(c, sc, f)
        rep["localization"] = rows
        order = expect.get("localization_order", 0.9)
        rates = rows["rates"]
        _check(rep, "localization", all(r >= order for r in rates),
               f"observed order >= {order:g}")

    if "perturbation" in checks:
        rep["perturbation"] = perturbation_study(c, sc, f, seed)
        shift = expect.get("lambda_shift", 0.05)
        p = rep["perturbation"]
        _check(rep, "perturbation", p["max_shift"] <= shift and p["operator_bound_holds"],
               f"lambda shift <= {shift:g} and operator-norm bound")
    return rep


def _transform_case(name: str, c, n: int):
    if name == "iota":
        return IOTA, build_mesh(c, n)
    if name == "diag":
        return linear_map(np.diag([2.0, 1.0, 1.0]), "diag(2,1,1)"), build_mesh(c, n)
    if name == "l_map":
        return build_l_map(), l_map_source_mesh(n)
    return straighten_slit_triangle(SlitKind.SIGMA2), build_mesh("cube_minus_sigma2", n)


def _transform_coefficient(spec: dict, mesh) -> CoefficientField:
    if spec["kind"] == "mirror" and mesh.symmetry_map is not None:
        return mirror_extend(spd_matrix(spec["matrix"]), mesh)
    if spec["kind"] in ("constant", "mirror"):
        return CoefficientField.constant(spd_matrix(spec["matrix"]), mesh)
    return CoefficientField.identity(mesh)


def cutoff(mesh, center, radius) -> np.ndarray:
    """Nodal values of ``max(0, 1 - |x - c|^2 / R^2)^2``."""
    d2 = np.sum((mesh.vertices - np.asarray(center, float)) ** 2, axis=1)
    return np.clip(1.0 - d2 / radius ** 2, 0.0, None) ** 2


def localization_residuals(c, sc: dict, f: RhsFunctional) -> dict:
    """Dual norm of ``A (eta u_h) - f_loc`` where ``f_loc`` is the localized right-hand side."""
    hs, res = [], []
    for n in sc["levels"]:
        mesh = build_mesh(c, n)
        rho = build_coefficient(sc["coefficient"], mesh)
        system = assemble(mesh, rho)
        red = apply_bc(system)
        u = solve(red, f.load_vector(mesh), min(sc["tol"], 1e-12)).u
        eta = cutoff(mesh, sc["localization"]["center"], sc["localization"]["radius"])
        b_loc = localize(mesh, u, eta, rho, f).load
        r = (system.matrix @ (eta * u) - b_loc)[red.dofmap.index]
        hs.append(mesh.h)
        res.append(dual_norm(red, r))
    consts = [r / h for r, h in zip(res, hs)]
    return {"n": sc["levels"], "h": hs, "residuals": res, "rates": observed_rates(hs, res),
            "residual_over_h": consts}


def perturbation_study(c, sc: dict, f: RhsFunctional, seed: int) -> dict:
    n = sc["levels"][-1]
    mesh = build_mesh(c, n)
    rho = build_coefficient(sc["coefficient"], mesh)
    eps = sc["perturbation"]["relative_size"] * ellipticity_constant(rho)
    rng = np.random.default_rng(seed)
    base = estimate_exponent(c, n, rho, f, sc["tol"], sc["exponent"]["method"], mesh=mesh)
    a_rho = assemble(mesh, rho).matrix
    norm_id = spectral_norm(assemble(mesh, CoefficientField.identity(mesh)).matrix)
    rows = []
    for _ in range(sc["perturbation"]["samples"]):
        d = rng.standard_normal((3, 3))
        d = (d + d.T) / 2
        d *= eps / np.max(np.abs(np.linalg.eigvalsh(d)))
        if mesh.symmetry_map is not None and check_iota_invariance(rho, mesh):
            delta = mirror_extend(d, mesh)
        else:
            delta = CoefficientField.constant(spd_matrix(d), mesh)
        pert = perturb(rho, delta, eps)
        er = estimate_exponent(c, n, pert, f, sc["tol"], sc["exponent"]["method"], mesh=mesh)
        diff_norm = spectral_norm(assemble(mesh, pert).matrix - a_rho)
        bound = spectral_sup(delta) * norm_id
        rows.append({"lambda": er.lam, "shift": abs(er.lam - base.lam), "delta_sup":
                     spectral_sup(delta), "operator_difference": diff_norm,
                     "operator_bound": bound, "coefficient_hash": pert.digest()})
    return {"n": n, "eps": eps, "lambda_base": base.lam, "samples": rows,
            "max_shift": max(r["shift"] for r in rows),
            "operator_bound_holds": all(r["operator_difference"] <= r["operator_bound"] * (1 + 1e-9)
                                        for r in rows)}


# ---------------------------------------------------------------- run / compare

def run(cfg: dict) -> tuple[int, dict]:
    """Execute every scenario; returns (exit code, report).  Writes ``report.json``."""
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(sc):
        try:
            return run_scenario(sc, cfg["seed"], out_dir)
        except SolverError as exc:
            return {"scenario": sc["name"], "solver_error": str(exc)}

    if cfg["threads"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
            results = list(pool.map(one, cfg["scenario"]))
    else:
        results = [one(sc) for sc in cfg["scenario"]]
    report = {"schema_version": SCHEMA_VERSION, "config": cfg, "scenarios": results}
    io.write_json(out_dir / "report.json", report)
    if any("solver_error" in r for r in results):
        return 3, report
    ok = all(ch["pass"] for r in results for ch in r.get("checks", {}).values())
    return (0 if ok else 1), report


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def compare(a: dict, b: dict, tol: float = 1e-12, field_tols: Optional[dict] = None
            ) -> list[str]:
    """Field-wise differences between two reports of the same schema version.

    Numbers are compared with ``tol`` (absolute), overridden per key name by
    ``field_tols``.  A key present in one report only is a schema error.
    """
    field_tols = {"lambda": 0.05} if field_tols is None else field_tols
    if a.get("schema_version") != b.get("schema_version"):
        raise SchemaError(f"schema versions differ: {a.get('schema_version')!r} vs "
                          f"{b.get('schema_version')!r}")
    out: list[str] = []

    def walk(x, y, path, key):
        if isinstance(x, dict) and isinstance(y, dict):
            missing = set(x) ^ set(y)
            if missing:
                raise SchemaError(f"{path or 'report'}: fields {sorted(missing)} missing on one side")
            for k in sorted(x):
                walk(x[k], y[k], f"{path}.{k}" if path else k, k)
        elif isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                out.append(f"{path}: length {len(x)} != {len(y)}")
                return
            for i, (u, v) in enumerate(zip(x, y)):
                walk(u, v, f"{path}[{i}]", key)
        elif _is_num(x) and _is_num(y):
            t = field_tols.get(key, tol)
            if abs(x - y) > t:
                out.append(f"{path}: {x!r} != {y!r} (|diff| {abs(x - y):.3g} > {t:g})")
        elif x != y:
            out.append(f"{path}: {x!r} != {y!r}")

    walk(a, b, "", "")
    return out


# ---------------------------------------------------------------- command line

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out-dir", help=f"output directory (env {ENV_OUT_DIR})")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--threads", type=int, help=f"scenario worker threads (env {ENV_THREADS})")
    p = argparse.ArgumentParser(prog="buriedfem", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list-constellations", parents=[common], help="print the geometry catalog")
    sub.add_parser("run", parents=[common], help="run every scenario of --config")

    def scenario_cmd(name, help_, levels=(8,)):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("constellation")
        s.add_argument("-n", "--levels", type=int, nargs="+", default=list(levels))
        s.add_argument("--coefficient", choices=("identity", "mirror", "constant"),
                       default="identity")
        s.add_argument("--matrix", type=float, nargs=6, metavar="M",
                       help="6 entries in the order 11 22 33 23 13 12")
        s.add_argument("--density", type=float, default=1.0)
        s.add_argument("--tol", type=float, default=1e-10)
        return s

    scenario_cmd("mesh", "build meshes and write them as VTK")
    scenario_cmd("solve", "solve and write VTK + JSON")
    scenario_cmd("symmetry-check", "compare half-problem and direct solves")
    scenario_cmd("transform-check", "form identity under the catalog maps")
    scenario_cmd("exponent", "fit the edge exponent", (32,))
    s = scenario_cmd("convergence", "rates over nested refinements", (8, 16, 32))
    s.add_argument("--local-radius", type=float, default=0.25)
    c = sub.add_parser("compare", parents=[common], help="diff two JSON reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--tol", type=float, default=1e-12)
    c.add_argument("--lambda-tol", type=float, default=0.05)
    return p


_COMMAND_CHECKS = {"mesh": [], "solve": ["solve"], "symmetry-check": ["symmetry"],
                   "transform-check": ["transform"], "exponent": ["exponent"],
                   "convergence": ["convergence"]}


def _scenario_from_args(args) -> dict:
    coef: dict[str, Any] = {"kind": args.coefficient}
    if args.coefficient != "identity":
        if args.matrix is None:
            raise ValidationError("--matrix: required for a non-identity coefficient")
        coef["matrix"] = list(args.matrix)
    sc = {"constellation": args.constellation, "levels": args.levels,
          "checks": _COMMAND_CHECKS[args.command], "coefficient": coef,
          "rhs": {"density": args.density}, "tol": args.tol}
    if args.command == "convergence":
        sc["convergence"] = {"local_radius": args.local_radius}
    return sc


def _mesh_only(cfg: dict) -> dict:
    out_dir = Path(cfg["out_dir"])
    rows = []
    for sc in cfg["scenario"]:
        for n in sc["levels"]:
            mesh = build_mesh(sc["constellation"], n)
            stem = out_dir / f"{sc['name']}_n{n}_mesh"
            io.write_vtk(f"{stem}.vtk", mesh)
            io.write_surface_vtk(f"{stem}_boundary.vtk", mesh)
            rows.append({"scenario": sc["name"], "n": n, "tets": mesh.n_tets,
                         "vertices": mesh.n_vertices, "volume": mesh.total_volume(),
                         "regions": mesh.present_regions()})
    report = {"schema_version": SCHEMA_VERSION, "config": cfg, "meshes": rows}
    io.write_json(out_dir / "report.json", report)
    return report


def _summary(report: dict) -> str:
    lines = []
    for r in report.get("scenarios", []):
        if "solver_error" in r:
            lines.append(f"{r['scenario']}: SOLVER ERROR {r['solver_error']}")
            continue
        for name, ch in r.get("checks", {}).items():
            lines.append(f"{r['scenario']}: {name} {'PASS' if ch['pass'] else 'FAIL'} "
                         f"({ch['detail']})")
        if "exponent" in r:
            e = r["exponent"]
            lines.append(f"{r['scenario']}: lambda = {e['lambda']:.4f}, q* = {e['q_star']}, "
                         f"flags = {e['flags']}")
        for w in r.get("warnings", []):
            lines.append(f"{r['scenario']}: warning: {w}")
    for m in report.get("meshes", []):
        lines.append(f"{m['scenario']} n={m['n']}: {m['tets']} tets, {m['vertices']} vertices")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-constellations":
            for name, c in CATALOG.items():
                print(f"{name:32s} {c.classification.value:14s} {c.description}")
            return 0
        if args.command == "compare":
            a = _read_report(args.report_a)
            b = _read_report(args.report_b)
            diffs = compare(a, b, args.tol, {"lambda": args.lambda_tol})
            print("\n".join(diffs) if diffs else "no differences")
            return 1 if diffs else 0
        overrides = {"out_dir": args.out_dir, "seed": args.seed, "threads": args.threads}
        if args.command == "run":
            if not args.config:
                raise ValidationError("run: --config is required")
            raw = load_config(args.config)
        else:
            raw = load_config(args.config) if args.config else {}
            raw = {k: v for k, v in raw.items() if k != "scenario"}
            raw["scenario"] = [_scenario_from_args(args)]
        cfg = resolve_config(raw, overrides)
        if args.command == "mesh":
            print(_summary(_mesh_only(cfg)))
            return 0
        code, report = run(cfg)
        print(_summary(report))
        return code
    except (ValidationError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except BuriedFemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


if __name__ == "__main__":
    sys.exit(main())
