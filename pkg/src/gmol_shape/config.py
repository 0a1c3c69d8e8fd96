"""Run configuration: JSON document parsing, presets and serialization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .expr import ExpressionError, compile_expression
from .geometry import AngularGrid, BoundaryData, ShapeCurve

MODES = ("forward", "inverse", "validate")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _annulus_log_flux(R: float) -> str:
    # u = ln(r / r0) / ln(R / r0) with r0 = R/2; flux at R is 1 / (R ln 2)
    return repr(1.0 / (R * math.log(2.0)))


BOUNDARY_PRESETS = {
    "annulus-log": lambda R: {"u_o": "0", "u_f": "1", "w": _annulus_log_flux(R)},
    "paper-3.1": lambda R: {
        "u_o": "0.5*cos(pi*x)+0.8",
        "u_f": "0.5*sin(2*pi*x)+1.0",
        "w": "0.3*(cos(2*pi*x)/2+1.0)",
    },
    "synthetic-recovery": lambda R: {
        "u_o": "0.5*cos(2*pi*x)+0.8",
        "u_f": "0.5*sin(2*pi*x)+1.0",
    },
    "constant": lambda R: {"u_o": "1", "u_f": "1", "w": "0"},
}

PRESETS = {
    "paper-3.1": {
        "mode": "inverse",
        "R": 30.0,
        "K": 250.0,
        "boundary": {"preset": "paper-3.1"},
        # a thin gap is the only region where the target flux is reachable
        "shape0": "29",
        "optimizer": {"mode": "alternating", "max_iters": 500},
    },
    "annulus-log": {
        "mode": "forward",
        "R": 2.0,
        "N": 40,
        "M": 64,
        "boundary": {"preset": "annulus-log"},
        "shape0": "1",
    },
    "synthetic-recovery": {
        "mode": "inverse",
        "R": 3.0,
        "K": 250.0,
        "N": 10,
        "M": 32,
        "boundary": {"preset": "synthetic-recovery"},
        "truth_shape": "1+0.1*cos(4*pi*x)",
        "shape0": "1",
        "optimizer": {"mode": "alternating", "max_iters": 4000},
    },
}

OPTIMIZER_KEYS = ("mode", "max_iters", "grad_tol", "rel_step", "smoothing", "r_min")


@dataclass
class RunConfig:
    R: float
    mode: str = "forward"
    preset: str | None = None
    K: float = 1.0
    N: int = 10
    M: int = 64
    tol: float = 1e-10
    max_iter: int = 10_000
    margin: float | None = None
    boundary: dict = field(default_factory=dict)
    shape0: object = None
    truth_shape: object = None
    optimizer: dict = field(default_factory=dict)
    output: str | None = None
    plain_norms: bool = False
    seed: int = 0

    # -- resolution into numerical objects ------------------------------------------

    @property
    def grid(self) -> AngularGrid:
        return AngularGrid(self.M)

    def samples(self, spec, name: str) -> np.ndarray:
        grid = self.grid
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return np.full(grid.M, float(spec))
        if isinstance(spec, str):
            try:
                return compile_expression(spec)(grid.x) * np.ones(grid.M)
            except ExpressionError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        if isinstance(spec, (list, tuple)):
            if len(spec) != grid.M:
                raise ConfigError(f"{name}: expected {grid.M} samples, got {len(spec)}")
            return np.asarray(spec, dtype=float)
        raise ConfigError(f"{name}: expected a number, expression string or sample list")

    def shape(self, spec=None, name: str = "shape0") -> ShapeCurve:
        spec = self.shape0 if spec is None else spec
        if spec is None:
            spec = self.R / 2
        return ShapeCurve(self.grid, self.samples(spec, name), self.R, self.margin)

    def boundary_data(self, w=None) -> BoundaryData:
        b = self.boundary
        u_o = self.samples(b["u_o"], "boundary.u_o")
        u_f = self.samples(b["u_f"], "boundary.u_f")
        if w is None:
            w = self.samples(b["w"], "boundary.w") if b.get("w") is not None else None
        return BoundaryData(self.grid, u_o, u_f, w)


def _require(doc: dict, key: str):
    if key not in doc or doc[key] is None:
        raise ConfigError(f"missing field {key}")
    return doc[key]


def _number(doc, key, kind=float):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {key} must be a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"field {key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _check_expressions(spec: dict, prefix: str):
    for key, value in spec.items():
        if isinstance(value, str) and key != "preset":
            try:
                compile_expression(value)
            except ExpressionError as exc:
                raise ConfigError(f"{prefix}.{key}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a decoded configuration document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    merged: dict = {}
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available presets: {', '.join(sorted(PRESETS))}")
        merged.update(json.loads(json.dumps(PRESETS[preset])))
    for key, value in doc.items():
        if key in ("boundary", "optimizer") and isinstance(value, dict):
            merged[key] = {**merged.get(key, {}), **value}
        else:
            merged[key] = value

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")

    R = _number({"R": _require(merged, "R")}, "R")
    if not R > 0:
        raise ConfigError("field R must be positive")
    out = {"R": R, "preset": preset}
    mode = merged.get("mode", "forward")
    if mode not in MODES:
        raise ConfigError(f"field mode must be one of {', '.join(MODES)}, got {mode!r}")
    out["mode"] = mode
    for key, kind in (("K", float), ("N", int), ("M", int), ("tol", float), ("max_iter", int), ("seed", int)):
        if merged.get(key) is not None:
            out[key] = _number(merged, key, kind)
    if out.get("K", 0.0) < 0:
        raise ConfigError("field K must be non-negative")
    if out.get("N", 10) < 2:
        raise ConfigError("field N must be at least 2")
    M = out.get("M", 64)
    if M < 8 or M % 2:
        raise ConfigError("field M must be even and at least 8")
    if out.get("tol", 1.0) <= 0:
        raise ConfigError("field tol must be positive")
    out["margin"] = _number(merged, "margin") if merged.get("margin") is not None else 0.02 * R
    if out["margin"] <= 0:
        raise ConfigError("field margin must be positive")

    boundary = dict(merged.get("boundary") or {})
    bpreset = boundary.get("preset")
    if bpreset is not None:
        if bpreset not in BOUNDARY_PRESETS:
            raise ConfigError(
                f"unknown boundary preset {bpreset!r}; available presets: {', '.join(sorted(BOUNDARY_PRESETS))}"
            )
        boundary = {**BOUNDARY_PRESETS[bpreset](R), **boundary}
    if mode != "validate":
        for key in ("u_o", "u_f"):
            if boundary.get(key) is None:
                raise ConfigError(f"missing field boundary.{key}")
    _check_expressions(boundary, "boundary")
    out["boundary"] = boundary

    for key in ("shape0", "truth_shape"):
        value = merged.get(key)
        if isinstance(value, str):
            try:
                compile_expression(value)
            except ExpressionError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        out[key] = value

    optimizer = dict(merged.get("optimizer") or {})
    bad = sorted(set(optimizer) - set(OPTIMIZER_KEYS))
    if bad:
        raise ConfigError(f"unknown optimizer option(s): {', '.join(bad)}")
    if optimizer.get("mode", "joint") not in ("joint", "alternating"):
        raise ConfigError("optimizer.mode must be 'joint' or 'alternating'")
    out["optimizer"] = optimizer
    out["output"] = merged.get("output")
    out["plain_norms"] = bool(merged.get("plain_norms", False))
    return RunConfig(**out)


def parse_config(text: str) -> RunConfig:
    """Parse a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def serialize_config(config: RunConfig) -> str:
    doc = asdict(config)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Re-validate ``config`` with command-line overrides for scalar fields."""
    doc = asdict(config)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(doc)
