"""``roughctl <gen|integrate|solve|chatter|optimize|verify> --config FILE``.

Every run writes its outputs and a ``manifest.json`` (resolved config, tool
version, output checksums) into the output directory.  Identical config and
seed give byte-identical files.  Exit status: 0 on success, 1 on a runtime
failure (details in ``error.json``), 2 on an invalid config.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .acceptance import Settings, run_all
from .config import ExperimentConfig, load_config
from .doss import FlowSolver, solve_controlled
from .errors import ConfigError, RoughCtlError
from .optim import ControlProblem, CostSpec, optimize_parametric, optimize_relaxed
from .problems import cost_field, drift_field, parametric_instance, relaxed_instance, sigma_field
from .rde import ControlPath, young_euler_solve
from .relaxed import StepRelaxedControl, chatter, embed_ordinary, uniform_cells, vague_distance
from .signal import FbmSpec, GridPath, constant_path, fbm_generate, from_function, test_path
from .young import YoungIntegrand, young_fractional, young_riemann

COMMANDS = ("gen", "integrate", "solve", "chatter", "optimize", "verify")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, nonfinite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def table_csv(header, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


class Output:
    def __init__(self, directory: str):
        self.directory = directory
        self.files: dict = {}
        os.makedirs(directory, exist_ok=True)

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        with open(os.path.join(self.directory, name), "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


# --- stages -------------------------------------------------------------------


def make_driver(cfg: ExperimentConfig) -> GridPath:
    d = cfg.driver
    if d.kind == "fbm":
        return fbm_generate(FbmSpec(d.hurst, d.horizon, d.n_steps, cfg.run.seed), index_margin=d.index_margin)
    return test_path(d.path, d.horizon, d.n_steps, **d.params)


def _control(cfg: ExperimentConfig, g: GridPath) -> GridPath:
    kind = cfg.solve.control
    if kind == "zero":
        return constant_path(0.0, g.horizon, g.n_steps)
    if kind == "sine":
        return from_function(lambda t: np.sin(2 * np.pi * t / g.horizon), g.horizon, g.n_steps, 1.0)
    cells = np.minimum(np.arange(g.n_steps + 1) * 8 // g.n_steps, 7)
    return GridPath(g.horizon, np.where(cells % 2 == 0, 1.0, -1.0), 1.0)


def cmd_gen(cfg, out: Output, g: GridPath) -> dict:
    out.write("driver.csv", g.to_csv())
    return {
        "label": g.label,
        "n_steps": g.n_steps,
        "horizon": g.horizon,
        "holder_index": g.holder_index,
        "increment": g.values[-1] - g.values[0],
    }


def cmd_integrate(cfg, out: Output, g: GridPath) -> dict:
    kind = cfg.integrate.integrand
    if kind == "one":
        f = constant_path(1.0, g.horizon, g.n_steps)
    elif kind == "sin":
        f = from_function(np.sin, g.horizon, g.n_steps, 1.0)
    else:
        f = g
    yi = YoungIntegrand(f, g)
    riemann = young_riemann(yi)
    alphas = yi.alpha_grid(cfg.integrate.alphas)
    frac = [young_fractional(yi, a) for a in alphas]
    out.write("fractional.csv", table_csv(["alpha", "value"], [alphas, frac]))
    return {
        "integrand": kind,
        "riemann": riemann,
        "riemann_left": young_riemann(yi, rule="left"),
        "fractional": dict(zip([f"{a:.6f}" for a in alphas], frac)),
        "alpha_spread": max(frac) - min(frac),
        "max_difference": max(abs(v - riemann) for v in frac),
        "increment": g.values[-1] - g.values[0],
    }


def cmd_solve(cfg, out: Output, g: GridPath) -> dict:
    s = cfg.solve
    sigma, b = sigma_field(s.sigma), drift_field(s.drift)
    u = _control(cfg, g)
    summary = {"method": s.method, "sigma": s.sigma, "drift": s.drift, "control": s.control, "x0": s.x0}
    if s.method == "doss":
        x, diag = solve_controlled(FlowSolver.for_driver(sigma, g), b, g, u, s.x0, s.mode)
        out.write("trajectory.csv", table_csv(["t", "x", "y"], [x.times, x.values, diag.y.values]))
        summary["diagnostics"] = diag.as_dict()
    else:
        ctrl = ControlPath.from_path(u, 1.0)
        x = young_euler_solve(sigma, b, g, ctrl, s.x0)
        out.write("trajectory.csv", table_csv(["t", "x"], [x.times, x.values]))
    summary["final_x"] = x.values[-1]
    summary["sup_abs_x"] = float(np.max(np.abs(x.values)))
    if s.sigma == "linear" and s.drift == "zero":
        exact = s.x0 * math.exp(g.values[-1] - g.values[0])
        summary["closed_form"] = {
            "final_exact": exact,
            "relative_error": abs(x.values[-1] - exact) / abs(exact) if exact else None,
        }
    return summary


def cmd_chatter(cfg, out: Output, g: GridPath) -> dict:
    c = cfg.chatter
    q = StepRelaxedControl(uniform_cells(g.horizon, len(c.weights)), c.atoms, c.weights)
    out.write("relaxed.json", q.to_json() + "\n")
    problem = None
    if c.cost is not None:
        problem = ControlProblem(CostSpec(cost_field(c.cost)), sigma_field("zero"), drift_field("zero"), g, 0.0)
    rows = {}
    for m in c.levels:
        u, part = chatter(q, m, g.n_steps)
        out.write(f"control_m{m}.csv", u.to_csv())
        out.write(f"partition_m{m}.csv", part.to_csv())
        row = {"vague_distance": vague_distance(q, embed_ordinary(u, q.u_range))}
        if problem is not None:
            row["cost_gap"] = abs(problem.cost(q) - problem.cost(u))
        rows[str(m)] = row
    return {"levels": rows, "cost": c.cost}


def cmd_optimize(cfg, out: Output, g: GridPath) -> dict:
    o = cfg.optimize
    if o.regime == "relaxed":
        inst = relaxed_instance(o.instance)
        rep = optimize_relaxed(
            inst.problem(g), inst.atoms, inst.cells, o.method or "projected_gradient", seed=cfg.run.seed,
            chatter_level=o.chatter_level,
        )
    else:
        inst = parametric_instance(o.instance)
        rep = optimize_parametric(inst.problem(g), inst.family(), o.method or "nelder_mead")
    out.write("report.json", dumps(rep.as_dict()))
    out.write("trace.csv", rep.trace_csv())
    return {"instance": o.instance, "regime": o.regime, "best_cost": rep.best_cost, "method": rep.method}


def cmd_verify(cfg, out: Output, g: GridPath) -> dict:
    v = cfg.verify
    settings = Settings(tuple(v.seeds), cfg.driver.hurst, v.opt_steps, v.mc_small, v.mc_large, v.mc_steps)
    results = run_all(settings, set(v.criteria), progress=lambda r: print(r.line(), flush=True))
    rows = [{"number": r.number, "name": r.name, "passed": r.passed, "measured": r.measured} for r in results]
    out.write("verify.json", dumps({"criteria": rows, "all_passed": all(r.passed for r in results)}))
    return {"passed": sum(r.passed for r in results), "total": len(results), "all_passed": all(r.passed for r in results)}


HANDLERS = {
    "gen": cmd_gen,
    "integrate": cmd_integrate,
    "solve": cmd_solve,
    "chatter": cmd_chatter,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughctl", description="Young integrals, rough ODEs and relaxed control experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    p.add_argument("--version", action="version", version=f"roughctl {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.run.seed = args.seed
        if args.out is not None:
            cfg.run.out = args.out
    except ConfigError as exc:
        print(f"roughctl: config error: {exc}", file=sys.stderr)
        return 2
    out = Output(cfg.run.out)
    status = 0
    try:
        g = make_driver(cfg)
        summary = HANDLERS[args.command](cfg, out, g)
        if args.command == "verify" and not summary["all_passed"]:
            status = 1
    except (RoughCtlError, ArithmeticError, ValueError) as exc:
        out.write("error.json", dumps({"command": args.command, "error": type(exc).__name__, "message": str(exc)}))
        print(f"roughctl: {type(exc).__name__}: {exc}", file=sys.stderr)
        summary, status = None, 1
    if summary is not None:
        out.write("summary.json", dumps(summary))
        print(dumps(summary), end="")
    out.write(
        "manifest.json",
        dumps(
            {
                "tool": "roughctl",
                "version": __version__,
                "command": args.command,
                "status": status,
                "config": cfg.model_dump(),
                "outputs": dict(sorted(out.files.items())),
            }
        ),
    )
    return status


if __name__ == "__main__":
    sys.exit(main())
