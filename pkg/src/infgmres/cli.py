"""Command-line entry point.

    infgmres solve --config run.json --out results/
    infgmres sweep --solution results/solution.npz --mu 0.025:0.025:0.2 --out sweep.csv
    infgmres experiment --name delay-perturbation --out figs/

Exit status is 0 on success, 2 on non-convergence or failed assertions and
1 on errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .engine import EngineAbort, SolverConfig, run, run_two_pass
from .experiments import EXPERIMENTS, run_experiment
from .gallery import load_problem
from .inner import INNER_KINDS, InnerSolverError
from .solution import ParameterizedSolution, write_sweep_csv
from .taylor import EvaluatorUnavailable, rescale

log = logging.getLogger("infgmres")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

CONFIG_FIELDS = {
    "problem", "j_max", "eps", "ell_policy", "ell", "mu_ref", "inner", "stop_rel_res",
    "scale", "seed", "reorth", "keep_full_Ztilde", "two_pass",
}


class ConfigError(ValueError):
    pass


def _require(cond, field, msg):
    if not cond:
        raise ConfigError(f"config field {field!r}: {msg}")


def load_run_config(path):
    """Parse and validate a run-config JSON file."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    _require(isinstance(cfg, dict), "<root>", "must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_FIELDS)
    _require(not unknown, unknown[0] if unknown else "", "unknown field")
    _require("problem" in cfg, "problem", "missing")
    problem = cfg["problem"]
    _require(isinstance(problem, dict) and ("builtin" in problem or "manifest" in problem),
             "problem", "needs 'builtin' or 'manifest'")
    if "manifest" in problem:
        mpath = Path(problem["manifest"])
        if not mpath.is_absolute():
            mpath = path.parent / mpath
        problem = dict(problem, manifest=str(mpath.resolve()))
    cfg = dict(cfg, problem=problem)
    inner = cfg.get("inner", {"kind": "lu"})
    if isinstance(inner, str):
        inner = {"kind": inner}
    _require(isinstance(inner, dict), "inner", "must be an object or a kind name")
    _require(inner.get("kind", "lu") in INNER_KINDS, "inner.kind",
             f"expected one of {INNER_KINDS}, got {inner.get('kind')!r}")
    cfg["inner"] = inner
    scale = cfg.get("scale", 1.0)
    _require(isinstance(scale, (int, float)) and scale > 0, "scale", "must be positive")
    seed = cfg.get("seed")
    _require(seed is None or isinstance(seed, int), "seed", "must be an integer")
    return cfg


def _solver_config(cfg) -> SolverConfig:
    keys = ("j_max", "eps", "ell_policy", "ell", "mu_ref", "stop_rel_res", "reorth",
            "keep_full_Ztilde")
    kwargs = {k: cfg[k] for k in keys if k in cfg}
    kwargs["inner"] = cfg["inner"]
    try:
        return SolverConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config field {exc}") from exc


def _build_problem(cfg):
    spec = dict(cfg["problem"])
    if cfg.get("seed") is not None and spec.get("builtin") in ("time_delay", "random_dense"):
        spec.setdefault("seed", cfg["seed"])
    try:
        problem, b = load_problem(spec)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return problem, b, spec


def cmd_solve(config_path, output_dir) -> int:
    cfg = load_run_config(config_path)
    solver_cfg = _solver_config(cfg)
    problem, b, pspec = _build_problem(cfg)
    scale = float(cfg.get("scale", 1.0))
    family = rescale(problem, scale) if scale != 1.0 else problem
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    extra = {}
    try:
        if cfg.get("two_pass"):
            (sol, fact, trace), (sigma, j) = run_two_pass(family, b, solver_cfg)
            extra = {"sigma": sigma, "j_sigma": j}
        else:
            sol, fact, trace = run(family, b, solver_cfg)
    except EngineAbort as exc:
        exc.trace.to_csv(out / "trace.csv")
        raise
    wall = time.perf_counter() - t0
    trace.to_csv(out / "trace.csv")
    summary = dict(sol.summary)
    summary.update(extra)
    summary["wall_s"] = wall
    summary["seeds"] = {"problem": pspec.get("seed"), "inner": cfg["inner"].get("seed")}
    summary["config"] = cfg
    try:
        summary["true_rel_res_mu_ref"] = sol.true_relative_residual(solver_cfg.mu_ref, problem, b)
    except EvaluatorUnavailable:
        summary["true_rel_res_mu_ref"] = None
    sol = ParameterizedSolution(sol.Z_first, sol.H, sol.c_norm, sol.scale, sol.mu_ref,
                                sol.eps, {"problem": pspec, "final_rel_res": summary["final_rel_res"]})
    sol.save(out / "solution.npz")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    log.info("%d iterations, final relative residual %.3e, %.2f s",
             summary["iterations"], summary["final_rel_res"], wall)
    return EXIT_OK if summary["converged"] else EXIT_FAIL


def parse_mu_list(text: str) -> list[float]:
    """``"0.1,0.2"`` or the inclusive range ``"a:step:b"``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be a:step:b, got {text!r}")
        a, step, b = (float(p) for p in parts)
        if step == 0 or not all(map(math.isfinite, (a, step, b))):
            raise ValueError("range step must be nonzero and bounds finite")
        count = math.floor((b - a) / step + 1e-9) + 1
        if count <= 0:
            raise ValueError(f"range {text!r} is empty")
        return [a + k * step for k in range(count)]
    vals = [float(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise ValueError("mu list is empty")
    return vals


def cmd_sweep(solution_path, mu_spec, output_csv) -> int:
    mus = parse_mu_list(mu_spec)
    sol = ParameterizedSolution.load(solution_path)
    pspec = sol.summary.get("problem")
    if pspec is None:
        raise ConfigError(f"{solution_path}: no problem description stored; cannot form residuals")
    problem, b = load_problem(pspec)
    rows = sol.sweep(mus, problem, b)
    write_sweep_csv(rows, output_csv)
    for row in rows:
        if row.error:
            log.error("mu=%g: %s", row.mu, row.error)
    return EXIT_FAIL if any(row.error for row in rows) else EXIT_OK


def cmd_experiment(name, output_dir) -> int:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    results = run_experiment(name, output_dir)
    failed = [k for k, v in results.items() if not v["passed"]]
    for k in failed:
        print(f"FAIL {k}: {results[k]['detail']}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infgmres", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run inexact infinite GMRES from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p = sub.add_parser("sweep", help="evaluate a stored solution on a list of mu")
    p.add_argument("--solution", required=True)
    p.add_argument("--mu", required=True, help="comma list or a:step:b")
    p.add_argument("--out", required=True, help="output CSV")
    p = sub.add_parser("experiment", help="run a packaged reproduction")
    p.add_argument("--name", required=True, help=", ".join(EXPERIMENTS))
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out)
        if args.command == "sweep":
            return cmd_sweep(args.solution, args.mu, args.out)
        return cmd_experiment(args.name, args.out)
    except (ConfigError, ValueError, OSError, KeyError, EngineAbort, InnerSolverError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
