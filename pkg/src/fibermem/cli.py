"""Configuration-driven runs: build a benchmark problem, optimize, export.

The run configuration is a sectioned key-value file (INI syntax); the exact
grammar is documented in the README and by the shipped ``configs/*.ini``.
Every run writes its artifacts into the output directory:

    history.csv           per-iteration compliance / volume / rotation record
    design.csv            per-element design and recovered principal forces
    fields.vtk            legacy ASCII unstructured-grid file with cell data
    effective_config.ini  the fully-defaulted configuration actually used
    summary.json          machine-readable result (compliance, counts, flags)

Exit codes: 0 converged, 2 not converged (artifacts still written), 1 error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fem, optimizer
from .errors import ConfigError, FibermemError
from .geometry import SurfaceMesh, make_spheroid_mesh, make_strip_mesh
from .material import MembraneMaterial

_INIT_MODES = ("axis-aligned", "principal-from-unreinforced")


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; field names match the config keys."""

    # [geometry]
    kind: str                          # "spheroid" | "strip"
    n_lat: int = 64
    n_lon: int = 128
    half: bool = True
    nx: int = 32
    ny: int = 16
    load_length: float = 0.1
    load_center: float = 0.25
    # [material]
    E: float = 1.0
    nu: float = 0.3
    t_b: float = 0.005
    alpha: float = 1.0
    # [load]
    pressure: float = 0.0
    q: float = 0.0
    q_direction: tuple[float, float, float] = (0.0, -1.0, 0.0)
    # [design]
    volume_budget: float = 0.01
    lower1: float = 0.0
    lower2: float = 0.0
    upper1: float = 0.004
    upper2: float = 0.004
    init_direction_mode: str = "axis-aligned"
    # [settings]
    eta: float = 0.5
    obj_tol: float = 1e-5
    dir_tol: float = 0.999
    max_oc_iters: int = 400
    max_rotation_updates: int = 50
    lambda_bracket: str = "auto"       # "auto" or "<lo> <hi>"
    tie_tol: float = 1e-6
    kkt_tol: float = 1e-3
    fix_directions: bool = False
    # [output]
    directory: str = "out"


_SCHEMA: dict[str, dict[str, type]] = {
    "geometry": {"kind": str, "n_lat": int, "n_lon": int, "half": bool,
                 "nx": int, "ny": int, "load_length": float, "load_center": float},
    "material": {"E": float, "nu": float, "t_b": float, "alpha": float},
    "load": {"pressure": float, "q": float, "q_direction": tuple},
    "design": {"volume_budget": float, "lower1": float, "lower2": float,
               "upper1": float, "upper2": float, "init_direction_mode": str},
    "settings": {"eta": float, "obj_tol": float, "dir_tol": float,
                 "max_oc_iters": int, "max_rotation_updates": int,
                 "lambda_bracket": str, "tie_tol": float, "kkt_tol": float,
                 "fix_directions": bool},
    "output": {"directory": str},
}


def _parse_value(section: str, key: str, raw: str, typ: type):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            parts = raw.split()
            if len(parts) != 3:
                raise ValueError("expected three numbers")
            return tuple(float(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(str(exc), section, key) from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration document."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str          # keys are case-sensitive (E vs e)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None

    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section)
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", section, key)
            values[key] = _parse_value(section, key, raw, _SCHEMA[section][key])

    if "kind" not in values:
        raise ConfigError("missing required key", "geometry", "kind")
    config = RunConfig(**values)
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    if config.kind not in ("spheroid", "strip"):
        raise ConfigError(f"kind must be 'spheroid' or 'strip', got {config.kind!r}",
                          "geometry", "kind")
    if config.init_direction_mode not in _INIT_MODES:
        raise ConfigError(f"must be one of {_INIT_MODES}", "design", "init_direction_mode")
    try:
        MembraneMaterial(E=config.E, nu=config.nu, t_b=config.t_b, alpha=config.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc), "material") from None
    for key in ("volume_budget", "upper1", "upper2"):
        if getattr(config, key) <= 0:
            raise ConfigError("must be positive", "design", key)
    for key in ("lower1", "lower2"):
        if getattr(config, key) < 0:
            raise ConfigError("must be non-negative", "design", key)
    if config.lower1 > config.upper1 or config.lower2 > config.upper2:
        raise ConfigError("lower bounds must not exceed upper bounds", "design")
    if not np.linalg.norm(config.q_direction) > 0:
        raise ConfigError("must be a nonzero vector", "load", "q_direction")
    try:
        optimizer.OptimizationSettings(**_settings_kwargs(config))
    except ValueError as exc:
        raise ConfigError(str(exc), "settings") from None


def _settings_kwargs(config: RunConfig) -> dict:
    bracket = None
    if config.lambda_bracket.strip() != "auto":
        parts = config.lambda_bracket.split()
        if len(parts) != 2:
            raise ConfigError("expected 'auto' or two floats", "settings", "lambda_bracket")
        try:
            bracket = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise ConfigError("expected 'auto' or two floats", "settings",
                              "lambda_bracket") from None
        if not 0 < bracket[0] < bracket[1]:
            raise ConfigError("must be a positive increasing interval", "settings",
                              "lambda_bracket")
    return dict(eta=config.eta, obj_tol=config.obj_tol, dir_tol=config.dir_tol,
                max_oc_iters=config.max_oc_iters,
                max_rotation_updates=config.max_rotation_updates,
                lambda_bracket=bracket, tie_tol=config.tie_tol, kkt_tol=config.kkt_tol,
                fix_directions=config.fix_directions)


def emit_config(config: RunConfig) -> str:
    """Canonical text form; ``parse_config(emit_config(c)) == c``."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in keys:
            value = getattr(config, key)
            if isinstance(value, tuple):
                text = " ".join(repr(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            out.write(f"{key} = {text}\n")
        out.write("\n")
    return out.getvalue()


def build_problem(config: RunConfig):
    """Mesh, material, and load case for a validated configuration."""
    material = MembraneMaterial(E=config.E, nu=config.nu, t_b=config.t_b, alpha=config.alpha)
    if config.kind == "spheroid":
        mesh = make_spheroid_mesh(config.n_lat, config.n_lon, config.half)
        dirichlet = ({"symmetry": "y", "pin_a": "xz", "pin_b": "z"} if config.half
                     else {"pin_a": "xyz", "pin_b": "xy", "pin_c": "y"})
        loads = fem.LoadCase(pressure=config.pressure, dirichlet=dirichlet)
    else:
        mesh = make_strip_mesh(config.nx, config.ny,
                               load_length=config.load_length, load_center=config.load_center)
        traction = config.q * np.asarray(config.q_direction) / np.linalg.norm(config.q_direction)
        loads = fem.LoadCase(edge_tractions={"loaded": tuple(traction)},
                             dirichlet={"clamped": "xyz"})
    return mesh, material, loads


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def export_fields(mesh: SurfaceMesh, design, state: fem.MembraneState, path) -> None:
    """Write the mesh with per-cell design/force data as legacy ASCII VTK.

    Cell data: t1, t2, fiber direction vector, M_I, M_II.  Output is
    byte-stable for identical inputs.
    """
    pf = state.point_forces
    lines = ["# vtk DataFile Version 3.0", "fiber-reinforced membrane fields", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines += [" ".join(_fmt(c) for c in p) for p in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {5 * mesh.n_elements}")
    lines += ["4 " + " ".join(str(i) for i in el) for el in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += ["9"] * mesh.n_elements
    lines.append(f"CELL_DATA {mesh.n_elements}")
    for name, arr in (("t1", design.t1), ("t2", design.t2)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in arr]
    lines.append("VECTORS fiber_direction double")
    lines += [" ".join(_fmt(c) for c in v) for v in design.s]
    for name, arr in (("M_I", pf.M_I), ("M_II", pf.M_II)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in arr]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise FibermemError(f"cannot write field export {path}: {exc}") from exc


def _write_history(history: optimizer.RunHistory, path: Path) -> None:
    rows = ["iteration,compliance,fiber_volume,max_direction_change,oc_iterations"]
    for i in range(len(history.compliance)):
        rows.append(",".join([str(i), _fmt(history.compliance[i]),
                              _fmt(history.fiber_volume[i]),
                              _fmt(history.max_direction_change[i]),
                              str(history.oc_iterations[i])]))
    path.write_text("\n".join(rows) + "\n")


def _write_design_table(mesh, design, state, path: Path) -> None:
    pf = state.point_forces
    cen = mesh.quadrature.centroid
    rows = ["element,cx,cy,cz,t1,t2,sx,sy,sz,M_I,M_II,dir_x,dir_y,dir_z"]
    for e in range(mesh.n_elements):
        rows.append(",".join(
            [str(e)] + [_fmt(v) for v in cen[e]] + [_fmt(design.t1[e]), _fmt(design.t2[e])]
            + [_fmt(v) for v in design.s[e]] + [_fmt(pf.M_I[e]), _fmt(pf.M_II[e])]
            + [_fmt(v) for v in pf.direction[e]]))
    path.write_text("\n".join(rows) + "\n")


def run(config: RunConfig, out_dir: str | None = None, quiet: bool = False) -> int:
    """Execute a configured run and write all artifacts.

    Returns the process exit status: 0 converged, 2 not converged.
    Errors raise; the command-line wrapper maps them to status 1.
    """
    out = Path(out_dir if out_dir is not None else config.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(emit_config(config))

    mesh, material, loads = build_problem(config)
    design0 = optimizer.initial_design(
        mesh, material, loads, config.volume_budget,
        lower1=config.lower1, lower2=config.lower2,
        upper1=config.upper1, upper2=config.upper2,
        mode=config.init_direction_mode)
    settings = optimizer.OptimizationSettings(**_settings_kwargs(config))
    design, state, history = optimizer.optimize(mesh, material, loads, design0, settings)
    report = optimizer.kkt_certificate(mesh, material, design, state,
                                       history.final_lambda, history.constraint_active)

    _write_history(history, out / "history.csv")
    _write_design_table(mesh, design, state, out / "design.csv")
    export_fields(mesh, design, state, out / "fields.vtk")
    summary = {
        "converged": history.converged,
        "compliance": state.compliance,
        "fiber_volume": design.fiber_volume(),
        "oc_updates_total": history.total_oc_updates,
        "rotation_updates": history.rotation_updates,
        "final_lambda": history.final_lambda,
        "volume_constraint_active": history.constraint_active,
        "kkt": {
            "max_interior_residual": report.max_interior_residual,
            "interior_count": report.interior_count,
            "volume_residual": report.volume_residual,
            "bound_violation": report.bound_violation,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if not quiet:
        status = "converged" if history.converged else "NOT converged"
        print(f"{status}: compliance {state.compliance:.6e}, "
              f"{history.total_oc_updates} sizing updates, "
              f"{history.rotation_updates} rotation updates -> {out}")
    return 0 if history.converged else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fibermem",
                                     description="Optimally stiff fiber-reinforced membranes")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run an optimization from a config file")
    runp.add_argument("config", help="path to the run configuration")
    runp.add_argument("--out", help="output directory (overrides [output] directory)")
    runp.add_argument("--max-oc", type=int, help="cap on sizing iterations per inner loop")
    runp.add_argument("--max-rot", type=int, help="cap on rotation updates")
    runp.add_argument("--eta", type=float, help="damping exponent of the sizing update")
    runp.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        config = parse_config(text)
        overrides = {}
        if args.max_oc is not None:
            overrides["max_oc_iters"] = args.max_oc
        if args.max_rot is not None:
            overrides["max_rotation_updates"] = args.max_rot
        if args.eta is not None:
            overrides["eta"] = args.eta
        if overrides:
            config = dataclasses.replace(config, **overrides)
            validate_config(config)
        return run(config, out_dir=args.out, quiet=args.quiet)
    except FibermemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
