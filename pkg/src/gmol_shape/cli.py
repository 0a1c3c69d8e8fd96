"""
Command-line driver.

    gmol-shape <forward|inverse|validate> --config PATH [--out DIR]
               [--lines N] [--angles M] [--penalty K] [--tol T] [--max-iters I]

Exit codes: 0 success, 1 failed validation or I/O error, 2 configuration
error, 3 solver non-convergence.  Errors are also reported as one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .config import PRESETS, ConfigError, RunConfig, apply_overrides, config_from_dict, parse_config
from .geometry import AngularGrid, BoundaryData, GeometryError, ShapeCurve
from .gmol import LineField, SweepDivergence, ansatz_field, gmol_sweep
from .optimizer import InverseOptions, solve_inverse
from .residuals import CostBreakdown, cost, neumann_flux

log = logging.getLogger("gmol_shape")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


@dataclass
class RunArtifacts:
    mode: str
    R: float
    shape: ShapeCurve | None = None
    field: LineField | None = None
    cost: CostBreakdown | None = None
    iterations: int = 0
    termination: str = ""
    summary: dict = dc_field(default_factory=dict)
    checks: list = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.checks)


def resolve_boundary(config: RunConfig) -> BoundaryData:
    """Boundary data of a run; ``w`` is synthesized by a forward sweep when only a true shape is given."""
    if config.boundary.get("w") is not None or config.truth_shape is None:
        return config.boundary_data()
    truth = config.shape(config.truth_shape, "truth_shape")
    base = config.boundary_data(w=np.zeros(config.M))
    sweep, _ = gmol_sweep(base, truth, config.N, config.tol, config.max_iter)
    return base.with_flux(neumann_flux(sweep, truth))


def _base_summary(c: CostBreakdown, iterations: int, termination: str) -> dict:
    return {
        "J": c.J,
        "lap_l2_sq": c.lap_l2_sq,
        "neumann_l2_sq": c.neumann_l2_sq,
        "lap_inf": c.lap_inf,
        "neumann_inf": c.neumann_inf,
        "K": c.K,
        "iterations": iterations,
        "termination": termination,
    }


def run_forward(config: RunConfig) -> RunArtifacts:
    boundary = resolve_boundary(config)
    shape = config.shape()
    sweep, reports = gmol_sweep(boundary, shape, config.N, config.tol, config.max_iter)
    breakdown = cost(sweep, shape, boundary.w, config.K, plain=config.plain_norms)
    flux = neumann_flux(sweep, shape)
    iterations = sum(r.iterations for r in reports)
    summary = _base_summary(breakdown, iterations, "converged")
    scale = float(np.max(np.abs(boundary.w)))
    if scale > 0:
        summary["flux_max_rel_error"] = float(np.max(np.abs(flux - boundary.w))) / scale
    summary["flux_min"] = float(flux.min())
    summary["flux_max"] = float(flux.max())
    return RunArtifacts("forward", config.R, shape, sweep, breakdown, iterations, "converged", summary)


def inverse_options(config: RunConfig) -> InverseOptions:
    opts = InverseOptions(plain_norms=config.plain_norms, sweep_tol=config.tol, sweep_max_iter=config.max_iter)
    for key, value in config.optimizer.items():
        setattr(opts, key, value)
    return opts


def run_inverse(config: RunConfig) -> RunArtifacts:
    boundary = resolve_boundary(config)
    shape0 = config.shape()
    started = time.perf_counter()
    result = solve_inverse(boundary, config.R, config.K, config.N, shape0, inverse_options(config))
    log.info("inverse solve took %.3f s", time.perf_counter() - started)
    line_field = ansatz_field(result.coeffs, boundary, result.shape, config.N)
    summary = _base_summary(result.cost, result.iterations, result.reason)
    summary["initial_J"] = result.history[0]
    summary["J_reduction"] = result.history[0] / result.history[-1] if result.history[-1] > 0 else math.inf
    summary["optimizer_mode"] = result.extras.get("mode")
    if config.truth_shape is not None:
        truth = config.shape(config.truth_shape, "truth_shape")
        summary["shape_rel_error"] = float(
            np.linalg.norm(result.shape.r - truth.r) / np.linalg.norm(truth.r)
        )
    return RunArtifacts(
        "inverse", config.R, result.shape, line_field, result.cost, result.iterations, result.reason, summary
    )


def run_validate(config: RunConfig) -> RunArtifacts:
    from .validation import oracle_checks

    checks, shape, line_field, breakdown = oracle_checks()
    summary = _base_summary(breakdown, 0, "validated")
    summary["checks"] = checks
    summary["passed"] = all(c["passed"] for c in checks)
    return RunArtifacts("validate", shape.R, shape, line_field, breakdown, 0, "validated", summary, checks)


def run(config: RunConfig) -> RunArtifacts:
    """Dispatch one run according to ``config.mode``."""
    return {"forward": run_forward, "inverse": run_inverse, "validate": run_validate}[config.mode](config)


# -- output ----------------------------------------------------------------------------


def fmt(value) -> str:
    """Number formatting shared by every output file (17 significant digits)."""
    return format(float(value), ".17g")


def _json(value, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [pad + _json(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return fmt(value) if math.isfinite(value) else "null"
    return json.dumps(str(value))


def shape_csv(r) -> str:
    """shape.csv content: one row (x, theta, r) per angular node."""
    r = np.asarray(r, dtype=float)
    M = r.size
    lines = ["x,theta,r"]
    for j, rj in enumerate(r):
        x = j / M
        lines.append(f"{fmt(x)},{fmt(2 * math.pi * x)},{fmt(rj)}")
    return "\n".join(lines) + "\n"


def field_csv(line_field: LineField) -> str:
    N, M = line_field.N, line_field.grid.M
    lines = ["n,j,t,x,u"]
    for n in range(N + 1):
        t = fmt(n / N)
        for j in range(M):
            lines.append(f"{n},{j},{t},{fmt(j / M)},{fmt(line_field.u[n, j])}")
    return "\n".join(lines) + "\n"


def shape_svg(r, R: float, size: int = 400) -> str:
    """Closed polar curve of the internal boundary with the outer circle for scale."""
    r = np.asarray(r, dtype=float)
    c = size / 2
    scale = 0.45 * size / R
    theta = 2 * np.pi * np.arange(r.size) / r.size
    xs = c + scale * r * np.cos(theta)
    ys = c - scale * r * np.sin(theta)
    path = " ".join(
        f"{'M' if j == 0 else 'L'} {fmt(x)} {fmt(y)}" for j, (x, y) in enumerate(zip(xs, ys))
    ) + " Z"
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'  <circle id="outer" cx="{fmt(c)}" cy="{fmt(c)}" r="{fmt(scale * R)}" '
        'fill="none" stroke="#888888" stroke-dasharray="4 3"/>\n'
        f'  <path id="inner" d="{path}" fill="#dde8f4" stroke="#1f4e79" stroke-width="1.5"/>\n'
        "</svg>\n"
    )


def emit_outputs(artifacts: RunArtifacts, directory) -> list:
    """Write shape.csv, field.csv, summary.json and shape.svg; return the paths written."""
    directory = os.fspath(directory)
    files = {
        "shape.csv": shape_csv(artifacts.shape.r),
        "field.csv": field_csv(artifacts.field),
        "summary.json": _json(artifacts.summary) + "\n",
        "shape.svg": shape_svg(artifacts.shape.r, artifacts.R),
    }
    written = []
    os.makedirs(directory, exist_ok=True)
    for name, text in files.items():
        path = os.path.join(directory, name)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        written.append(path)
    return written


# -- entry point -------------------------------------------------------------------


def _fail(code: int, kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmol-shape", description="Inverse internal-boundary solver (method of lines)")
    p.add_argument("mode", choices=("forward", "inverse", "validate"))
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--preset", choices=sorted(PRESETS), help="use a built-in configuration")
    p.add_argument("--out", help="output directory (default: config 'output' or ./gmol-out)")
    p.add_argument("--lines", type=int, help="number of line intervals N")
    p.add_argument("--angles", type=int, help="number of angular nodes M")
    p.add_argument("--penalty", type=float, help="Neumann penalty weight K")
    p.add_argument("--tol", type=float, help="fixed-point tolerance")
    p.add_argument("--max-iters", type=int, help="optimizer iterations (inverse) or fixed-point cap (forward)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from exc
        config = parse_config(text)
    elif args.preset:
        config = config_from_dict({"preset": args.preset})
    elif args.mode == "validate":
        config = config_from_dict({"R": 2.0, "mode": "validate"})
    else:
        raise ConfigError("either --config or --preset is required")
    overrides = {"mode": args.mode, "N": args.lines, "M": args.angles, "K": args.penalty, "tol": args.tol}
    if args.max_iters is not None:
        if args.mode == "inverse":
            overrides["optimizer"] = {**config.optimizer, "max_iters": args.max_iters}
        else:
            overrides["max_iter"] = args.max_iters
    return apply_overrides(config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        artifacts = run(config)
    except (ConfigError, GeometryError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except SweepDivergence as exc:
        return _fail(EXIT_SOLVER, "convergence", str(exc), line=exc.line)
    except ValueError as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc))

    out = args.out or config.output or "gmol-out"
    try:
        emit_outputs(artifacts, out)
    except OSError as exc:
        return _fail(EXIT_FAILED, "io", str(exc))
    print(_json({k: v for k, v in artifacts.summary.items() if k != "checks"}))
    if artifacts.checks:
        for c in artifacts.checks:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.6g} (limit {c['limit']:.6g})")
    if config.mode == "validate" and not artifacts.ok:
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
