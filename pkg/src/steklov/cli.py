"""Command line entry point: ``steklov {solve,oracle,optimize,resume,surface,validate,gradcheck}``."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .derivatives import (DesignLayout, cluster_for, eigenvalue_gradients, finite_difference)
from .domain import BoundaryDensity, InfeasibleDomainError, PuncturedDisk, validate as validate_disk
from .mps import SteklovSolveError, solve
from .optimize import (EvaluationError, InitializationError, OptimizationProblem, OptimizationState,
                       degeneration_of_state, final_cluster, load_checkpoint, run)
from .reference import AnnulusSpec, annulus_extremal_scan, fixture_density
from .surface import (DegenerateMetricError, ExportRefusedError, TriangulationError, boundary_centroids,
                      export_mesh, fit_mixing)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --- schemas ----------------------------------------------------------------------

_NUM = {"type": "number"}
_INT = {"type": "integer", "minimum": 1}
_GEOMETRY = {
    "type": "object", "additionalProperties": False, "required": ["centers", "radii"],
    "properties": {"centers": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                          "minItems": 2, "maxItems": 2}},
                   "radii": {"type": "array", "items": _NUM}},
}
_DENSITY = {
    "type": "object", "additionalProperties": False, "required": ["fourier_order", "density"],
    "properties": {"fourier_order": {"type": "integer", "minimum": 0},
                   "density": {"type": "array", "items": {
                       "type": "object", "additionalProperties": False, "required": ["a"],
                       "properties": {"a": {"type": "array", "items": _NUM},
                                      "b": {"type": "array", "items": _NUM}}}}},
}
_FIXTURE = {
    "type": "object", "additionalProperties": False, "required": ["name"],
    "properties": {"name": {"enum": ["annulus", "eccentric", "hippopede", "neck"]},
                   "params": {"type": "object", "additionalProperties": _NUM},
                   "order": {"type": "integer", "minimum": 0}},
}
_DOMAIN = {
    "type": "object", "additionalProperties": False,
    "properties": {"geometry": _GEOMETRY, "density": _DENSITY, "fixture": _FIXTURE},
}
_SOLVER = {
    "type": "object", "additionalProperties": False,
    "properties": {"M": _INT, "n_samples": _INT, "k_max": _INT},
}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}

SCHEMAS = {
    "solve": {"type": "object", "additionalProperties": False, "required": ["domain"],
              "properties": {"domain": _DOMAIN, "solver": _SOLVER, "boundary_traces": {"type": "boolean"},
                             "seed": _SEED}},
    "oracle": {"type": "object", "additionalProperties": False,
               "properties": {"j": {"type": "array", "items": _INT},
                              "s_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                              "ratio_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                              "grid": {"type": "integer", "minimum": 4}, "seed": _SEED}},
    "optimize": {"type": "object", "additionalProperties": False, "required": ["problem"],
                 "properties": {
                     "problem": {"type": "object", "additionalProperties": False, "required": ["n_components"],
                                 "properties": {
                                     "n_components": _INT, "j": _INT, "window": _INT,
                                     "order": {"type": "integer", "minimum": 0}, "basis_order": _INT,
                                     "n_samples": _INT, "rho_min": _NUM, "rho_max": {"type": ["number", "null"]},
                                     "max_iter": _INT, "tol": _NUM, "mu0": _NUM, "mu_min": _NUM,
                                     "mu_factor": _NUM, "positivity_points": _INT, "max_step": _NUM,
                                     "group_rtol": _NUM, "stagnation": _INT}},
                     "init": {"type": "object", "additionalProperties": False,
                              "properties": {"kind": {"enum": ["annulus", "random", "design"]},
                                             "radius": _NUM, "geometry": _GEOMETRY, "density": _DENSITY}},
                     "checkpoint_every": _INT, "time_limit": _NUM, "seed": _SEED}},
    "surface": {"type": "object", "additionalProperties": False,
                "properties": {"result": {"type": "string"}, "domain": _DOMAIN, "solver": _SOLVER,
                               "j": _INT, "restarts": {"type": "integer", "minimum": 0},
                               "resolution": {"type": "integer", "minimum": 8},
                               "quad_count": _INT, "cluster_rtol": _NUM, "seed": _SEED}},
    "gradcheck": {"type": "object", "additionalProperties": False, "required": ["domain"],
                  "properties": {"domain": _DOMAIN, "solver": _SOLVER, "index": _INT,
                                 "directions": _INT, "h": _NUM, "normalized": {"type": "boolean"},
                                 "seed": _SEED}},
}


def load_config(path: str | None, command: str, seed: int | None) -> dict:
    if path is None:
        cfg = {}
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {exc.message}") from exc
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _domain(cfg: dict):
    dom = cfg.get("domain", {})
    if "fixture" in dom:
        if "geometry" in dom or "density" in dom:
            raise ConfigError("domain: give either a fixture or geometry/density, not both")
        fx = dom["fixture"]
        params = dict(fx.get("params", {}))
        if fx["name"] == "annulus":
            try:
                spec = AnnulusSpec(**params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"annulus fixture: {exc}") from exc
            return spec.disk, spec.density(fx.get("order", 0))
        try:
            disk, density = fixture_density(fx["name"], **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fixture {fx['name']}: {exc}") from exc
        if "order" in fx:
            density = density.project(fx["order"])
        return disk, density
    geo = dom.get("geometry", {"centers": [], "radii": []})
    try:
        disk = PuncturedDisk.from_dict(geo)
    except (ValueError, InfeasibleDomainError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    if not validate_disk(disk).feasible:
        raise ConfigError("geometry: holes overlap or leave the unit disk")
    if "density" in dom:
        try:
            density = BoundaryDensity.from_dict(dom["density"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"density: {exc}") from exc
        if density.n_components != disk.n_components:
            raise ConfigError("density: one coefficient set per boundary component is required")
    else:
        density = BoundaryDensity.constant(disk.n_components)
    return disk, density


def _solver(cfg: dict, k_default: int = 10) -> tuple[int, int, int]:
    s = cfg.get("solver", {})
    return s.get("M", 20), s.get("n_samples", 2000), s.get("k_max", k_default)


# --- output helpers ---------------------------------------------------------------

class Output:
    def __init__(self, out: str | None, cfg: dict, command: str):
        self.dir = Path(out) if out else None
        self.meta = {"tool": "steklov", "version": __version__, "command": command,
                     "config_sha256": config_hash(cfg)}
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    @property
    def header(self) -> str:
        return f"steklov {self.meta['version']} command={self.meta['command']} config_sha256={self.meta['config_sha256']}"

    def path(self, name: str) -> Path | None:
        return None if self.dir is None else self.dir / name

    def csv(self, name: str, columns: list[str], rows) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if self.dir is not None:
            (self.dir / name).write_text(text)
        return text

    def json(self, name: str, payload: dict) -> str:
        text = json.dumps({"meta": self.meta, **payload}, indent=2, sort_keys=True, default=_jsonable) + "\n"
        if self.dir is not None:
            (self.dir / name).write_text(text)
        return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# --- subcommands ------------------------------------------------------------------

def cmd_solve(cfg: dict, out: Output) -> int:
    disk, density = _domain(cfg)
    M, n, k_max = _solver(cfg)
    sol = solve(disk, density, n, M, k_max)
    L = sol.weighted_length
    cluster_id = np.zeros(sol.eigenvalues.size, int)
    for cid, cl in enumerate(sol.clusters()):
        cluster_id[cl] = cid
    rows = [(i, sol.eigenvalues[i], sol.eigenvalues[i] * L, sol.residuals[i], int(cluster_id[i]))
            for i in range(sol.eigenvalues.size)]
    text = out.csv("spectrum.csv", ["index", "eigenvalue", "sigma_times_length", "residual",
                                    "multiplicity_cluster_id"], rows)
    if cfg.get("boundary_traces"):
        smp = sol.system.sampling
        U = sol.boundary_values()
        for i in range(U.shape[1]):
            out.csv(f"trace_{i}.csv", ["component", "theta", "x", "y", "u"],
                    [(int(smp.component[l]), smp.theta[l], smp.points[l, 0], smp.points[l, 1], U[l, i])
                     for l in range(smp.n_samples)])
    out.json("solve.json", {"rank": sol.rank, "weighted_length": L, "basis_order": M, "n_samples": n,
                            "suspect": [int(i) for i in np.flatnonzero(sol.suspect)]})
    if out.dir is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(cfg: dict, out: Output) -> int:
    js = cfg.get("j", [1, 3, 4, 5, 6])
    kw = {}
    if "s_range" in cfg:
        kw["s_range"] = tuple(cfg["s_range"])
    if "ratio_range" in cfg:
        kw["ratio_range"] = tuple(cfg["ratio_range"])
    if "grid" in cfg:
        kw["grid"] = cfg["grid"]
    rows = []
    for j in js:
        r = annulus_extremal_scan(j, **kw)
        rows.append((r.j, r.value, r.s, r.ratio, r.multiplicity))
        if not r.attained:
            print(f"warning: j={j} maximum sits on the search box boundary", file=sys.stderr)
    text = out.csv("oracle.csv", ["j", "sigma_L", "s", "rho_ratio", "multiplicity"], rows)
    if out.dir is None:
        sys.stdout.write(text)
    return EXIT_OK


def _design_from(cfg_init: dict, problem: OptimizationProblem) -> np.ndarray | None:
    kind = cfg_init.get("kind", "annulus" if problem.n_components == 2 else "random")
    if kind == "random":
        return None
    if kind == "annulus":
        if problem.n_components != 2:
            raise ConfigError("init.kind=annulus needs n_components=2")
        disk = PuncturedDisk(np.zeros((1, 2)), np.array([cfg_init.get("radius", 0.3)]))
        return problem.layout.pack(disk, BoundaryDensity.constant(2, problem.order))
    disk, density = _domain({"domain": {k: cfg_init[k] for k in ("geometry", "density") if k in cfg_init}})
    if disk.n_components != problem.n_components:
        raise ConfigError("init geometry does not match n_components")
    if density.order != problem.order:
        vec = np.zeros((disk.n_components, 2 * problem.order + 1))
        src = density.to_vector().reshape(disk.n_components, -1)
        m = min(density.order, problem.order)
        for k in range(disk.n_components):
            vec[k, : m + 1] = src[k, : m + 1]
            vec[k, problem.order + 1: problem.order + 1 + m] = src[k, density.order + 1: density.order + 1 + m]
        density = BoundaryDensity.from_vector(vec.ravel(), disk.n_components, problem.order)
    return problem.layout.pack(disk, density)


def _write_optimize_outputs(problem: OptimizationProblem, state: OptimizationState, out: Output, wall: float):
    disk, density = state.design(problem)
    try:
        values, members = final_cluster(problem, state.best_x)
        cluster = {"values": values, "indices": members, "multiplicity": len(members)}
    except EvaluationError as exc:
        cluster = {"error": str(exc)}
    report = degeneration_of_state(problem, state)
    hist = state.history
    out.csv("iterations.csv", ["iteration", "mu", "sigma_tilde", "t", "min_margin", "optimality", "step"],
            [(h["iteration"], h["mu"], h["sigma_tilde"], h["t"], h["min_margin"], h["optimality"], h["step"])
             for h in hist])
    payload = {"problem": problem.to_dict(), "sigma_tilde": state.best_value,
               "best_iteration": state.best_iteration, "iterations": state.iteration,
               "converged": state.converged, "message": state.message,
               "design": {"geometry": disk.to_dict(), "density": density.to_dict(),
                          "vector": state.best_x},
               "cluster": cluster, "flags": report.flags,
               "sigma_tilde_history": [h["sigma_tilde"] for h in hist]}
    text = out.json("result.json", payload)
    if out.dir is None:
        sys.stdout.write(text)
    print(f"sigma_tilde_{problem.j} = {state.best_value:.8f}  ({state.message}, {state.iteration} iterations, "
          f"{wall:.1f} s)", file=sys.stderr)


def cmd_optimize(cfg: dict, out: Output) -> int:
    pcfg = dict(cfg["problem"])
    if "seed" in cfg:
        pcfg["seed"] = cfg["seed"]
    try:
        problem = OptimizationProblem(**pcfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc
    x0 = _design_from(cfg.get("init", {}), problem)
    t0 = time.monotonic()
    state = run(problem, x0=x0, checkpoint=out.path("checkpoint.json"),
                checkpoint_every=cfg.get("checkpoint_every", 50), time_limit=cfg.get("time_limit"),
                checkpoint_meta=out.meta)
    _write_optimize_outputs(problem, state, out, time.monotonic() - t0)
    return EXIT_OK


def cmd_resume(path: str, out: Output, cfg: dict) -> int:
    try:
        problem, state = load_checkpoint(path)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from exc
    t0 = time.monotonic()
    state = run(problem, state=state, checkpoint=out.path("checkpoint.json"),
                checkpoint_every=cfg.get("checkpoint_every", 50), time_limit=cfg.get("time_limit"),
                checkpoint_meta=out.meta)
    _write_optimize_outputs(problem, state, out, time.monotonic() - t0)
    return EXIT_OK


def cmd_surface(cfg: dict, out: Output) -> int:
    j = cfg.get("j", 1)
    if "result" in cfg:
        try:
            res = json.loads(Path(cfg["result"]).read_text())
            design = res["design"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read optimization result: {exc}") from exc
        disk, density = _domain({"domain": {"geometry": design["geometry"], "density": design["density"]}})
        j = res.get("problem", {}).get("j", j)
        M = res.get("problem", {}).get("basis_order", 20)
        n = res.get("problem", {}).get("n_samples", 1000) * 2
    else:
        disk, density = _domain(cfg)
        M, n, _ = _solver(cfg)
    M = cfg.get("solver", {}).get("M", M)
    n = cfg.get("solver", {}).get("n_samples", n)
    sol = solve(disk, density, n, M, j + 6)
    cluster = cluster_for(sol, j, cfg.get("cluster_rtol", 1e-5))
    smap = fit_mixing(cluster, restarts=cfg.get("restarts", 8), quad_count=cfg.get("quad_count", 4000),
                      seed=cfg.get("seed", 0))
    payload = {"cluster_indices": list(cluster.indices), "cluster_values": sol.eigenvalues[list(cluster.indices)]
               * sol.weighted_length, "A": smap.A, "metrics": smap.metrics,
               "boundary_centroids": boundary_centroids(smap)}
    try:
        mesh = export_mesh(smap, cfg.get("resolution", 200))
    except ExportRefusedError as exc:
        out.json("metrics.json", {**payload, "export": str(exc)})
        raise
    if out.dir is not None:
        mesh.write_obj(out.dir / "surface.obj", out.header)
        mesh.write_csv(out.dir / "surface_vertices.csv", out.header)
    text = out.json("metrics.json", {**payload, "export": {"vertices": len(mesh.vertices),
                                                           "faces": len(mesh.faces)}})
    if out.dir is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(cfg: dict, out: Output) -> int:
    disk, density = _domain(cfg)
    if not isinstance(density, BoundaryDensity):
        density = density.project(8)
    M, n, _ = _solver(cfg)
    index = cfg.get("index", 1)
    h = cfg.get("h", 1e-6)
    normalized = cfg.get("normalized", False)
    layout = DesignLayout(disk.n_components, density.order)
    x = layout.pack(disk, density)
    from .mps import assemble, solve_eigs
    from .domain import sample_boundary
    sol = solve_eigs(assemble(disk, density, sample_boundary(disk, n), M), index + 2)
    if len(sol.cluster_of(index)) > 1:
        raise SteklovSolveError(f"eigenvalue {index} is clustered; gradcheck needs a simple eigenvalue")
    grad = eigenvalue_gradients(sol, index, density, normalized)[0]
    rng = np.random.default_rng(cfg.get("seed", 0))
    rows = []
    for k in range(cfg.get("directions", 10)):
        v = rng.standard_normal(layout.size)
        v /= np.linalg.norm(v)
        an = float(grad @ v)
        fd = float(finite_difference(x, layout, v, index, n, M, h, normalized)[0])
        rows.append((k, an, fd, abs(an - fd) / max(abs(fd), 1e-300)))
    text = out.csv("gradcheck.csv", ["direction", "analytic", "finite_difference", "relative_error"], rows)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(tier: str, out: Output) -> int:
    from .validation import run_suite
    results = run_suite(tier, stream=sys.stdout)
    out.json("validation.json", {"tier": tier, "results": [r.to_dict() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steklov", description="Weighted Steklov eigenvalues on punctured disks.")
    ap.add_argument("--version", action="version", version=f"steklov {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("solve", "spectrum of one domain and density"),
                           ("oracle", "annulus extremal table"),
                           ("optimize", "maximize sigma_j L"),
                           ("resume", "continue an optimization from a checkpoint"),
                           ("surface", "fit and export the free boundary minimal surface"),
                           ("validate", "run the acceptance suite"),
                           ("gradcheck", "compare analytic and finite-difference derivatives")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="U64")
        if name == "validate":
            p.add_argument("--tier", choices=["fast", "full"], default="fast")
        if name in ("resume", "optimize"):
            p.add_argument("--resume", metavar="PATH")
    return ap


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if cmd == "validate":
            cfg = {"tier": args.tier}
            return cmd_validate(args.tier, Output(args.out, cfg, cmd))
        resume = getattr(args, "resume", None)
        if cmd == "resume" and resume is None:
            raise ConfigError("resume needs --resume PATH")
        if resume is not None:
            cfg = load_config(args.config, "optimize", args.seed) if args.config else {}
            out = Output(args.out, {"resume": Path(resume).name, **cfg}, "resume")
            return cmd_resume(resume, out, cfg)
        cfg = load_config(args.config, cmd, args.seed)
        out = Output(args.out, cfg, cmd)
        handler = {"solve": cmd_solve, "oracle": cmd_oracle, "optimize": cmd_optimize,
                   "surface": cmd_surface, "gradcheck": cmd_gradcheck}[cmd]
        return handler(cfg, out)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except (SteklovSolveError, EvaluationError, InitializationError, DegenerateMetricError,
            TriangulationError, ExportRefusedError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error(type(exc).__name__, str(exc), EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
