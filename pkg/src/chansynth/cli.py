"""Command-line entry point: ``synth regions | coupling | cover | exact-demo``.

Exit codes: 0 success, 2 invalid configuration or input, 3 numeric failure.
Outputs embed the resolved configuration and a schema version; floats are
written with 17 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import CodebookParams, covering_experiment
from .coupling import InfeasibleTransport, TransportProblem, solve_transport
from .dist import LOG2, BudgetExceeded, DistributionError, EmptyTypicalSet, load_json
from .exact import end_to_end_demo
from .regions import (
    RegionCurve,
    dsbs_exact_region,
    dsbs_tv_region,
    gaussian_exact_inner_region,
    gaussian_tv_region,
    outer_constraints,
    search_lower_boundary,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)
    threads: int = 1

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "threads": self.threads, **self.options}


# --------------------------------------------------------------------------
# stable serialization


def _fmt(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v + 0.0, ".17g")  # + 0.0 maps -0 to 0


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits and +-inf/nan as strings."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    Path(out).write_text(text)


# --------------------------------------------------------------------------
# helpers


def _units_factor(units: str) -> float:
    if units not in ("bits", "nats"):
        raise ConfigError("units must be 'bits' or 'nats'")
    return 1.0 / LOG2 if units == "bits" else 1.0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ConfigError(f"grid must look like a:b:n, got {spec!r}") from exc
    if n < 1 or b < a or a < 0:
        raise ConfigError("grid needs 0 <= a <= b and n >= 1")
    return np.linspace(a, b, n)


def _load(path: str, kind: str):
    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        return load_json(path, kind)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"could not read {kind} from {path}: {exc}") from exc


def _curve_rows(curve: RegionCurve, name: str | None = None) -> list:
    rows = []
    for i in range(curve.param.size):
        row = {
            "param": curve.param[i],
            "R0": curve.r0[i],
            "R": curve.r[i],
            "sum_bound": curve.sum_bound[i],
            "r_bound": curve.r_bound[i],
        }
        if name is not None:
            row = {"curve": name, **row}
        rows.append(row)
    return rows


def _csv(rows: list, config: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    cols = list(rows[0].keys()) if rows else ["param", "R0", "R", "sum_bound", "r_bound"]
    buf.write(",".join(cols) + "\n")
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            if isinstance(v, (float, np.floating)):
                cells.append(format(float(v) + 0.0, ".17g"))
            elif isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _emit(rows: list, config: dict, fmt: str, out: str | None, extra: dict | None = None):
    if fmt == "csv":
        _write(_csv(rows, config), out)
    else:
        doc = {"schema_version": SCHEMA_VERSION, "config": config, **(extra or {}), "rows": rows}
        _write(dumps(doc) + "\n", out)


# --------------------------------------------------------------------------
# subcommands


def cmd_regions(cfg: RunConfig) -> int:
    o = cfg.options
    units = o["units"]
    _units_factor(units)
    chosen = [k for k in ("dsbs", "gaussian", "pi") if o.get(k) is not None]
    if len(chosen) != 1:
        raise ConfigError("choose exactly one of --dsbs, --gaussian, --pi")
    if o["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if o.get("dsbs") is not None or o.get("gaussian") is not None:
        if o.get("dsbs") is not None:
            p = o["dsbs"]
            if not 0 < p < 0.5:
                raise ConfigError("--dsbs needs p in (0, 1/2)")
            exact = dsbs_exact_region(p, o["grid"], units)
            tv = dsbs_tv_region(p, o["grid"], units)
        else:
            rho = o["gaussian"]
            if not 0 <= rho < 1:
                raise ConfigError("--gaussian needs rho in [0, 1)")
            exact = gaussian_exact_inner_region(rho, o["grid"], units)
            tv = gaussian_tv_region(rho, o["grid"], units)
        if o["compare"]:
            rows = _curve_rows(exact, "exact") + _curve_rows(tv, "tv")
            # strict: exact boundary above the TV boundary at the same R0
            for row in rows:
                r0 = row["R0"]
                ex, t = float(exact.boundary(r0)[0]), float(tv.boundary(r0)[0])
                row["strict"] = bool(ex > t + 1e-12)
        else:
            rows = _curve_rows(tv if o["bound"] == "cuff" else exact)
        _emit(rows, cfg.to_dict(), o["format"], o["out"])
        return EXIT_OK

    pi = _load(o["pi"], "joint")
    if o["bound"] not in ("exact-inner", "exact-outer", "cuff"):
        raise ConfigError("bound must be exact-inner, exact-outer or cuff")
    grid = _parse_grid(o["r0_grid"]) / _units_factor(units)
    kind = "cuff" if o["bound"] == "cuff" else "inner"
    curve = search_lower_boundary(pi, grid, kind, o["restarts"], o["seed"])
    if o["bound"] == "exact-outer":
        # outer constraints of every decomposition kept by the inner search
        cons = [outer_constraints(d, pi) for d in curve.decompositions]
        rb = np.array([c[0] for c in cons])
        sb = np.array([c[1] for c in cons])
        vals = np.maximum(rb[None, :], sb[None, :] - grid[:, None])
        best = vals.argmin(axis=1)
        curve = RegionCurve(
            grid, grid, np.maximum(vals.min(axis=1), 0.0), rb[best], sb[best], "nats",
            tuple(curve.decompositions[i] for i in best),
        )
    curve = curve.to(units)
    curve = replace(curve, param=curve.r0)  # the searched parameter is R0 itself
    _emit(_curve_rows(curve), cfg.to_dict(), o["format"], o["out"])
    return EXIT_OK


def cmd_coupling(cfg: RunConfig) -> int:
    o = cfg.options
    f = _units_factor(o["units"])
    pi = _load(o["pi"], "joint")
    px = _load(o["px"], "pmf") if o.get("px") else pi.px
    py = _load(o["py"], "pmf") if o.get("py") else pi.py
    if (len(px), len(py)) != pi.shape:
        raise ConfigError("marginal sizes do not match pi")
    if o["sense"] not in ("max", "min"):
        raise ConfigError("sense must be max or min")
    with np.errstate(divide="ignore"):
        cost = -np.log(pi.mass)
    c = solve_transport(TransportProblem(px, py, cost, o["sense"]))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "units": o["units"],
        "value": c.value * f,
        "coupling": c.joint,
        "certificate": {
            "u": c.u * f,
            "v": c.v * f,
            "reduced_cost_violation": c.reduced_cost_violation * f,
            "basis": [list(b) for b in c.basis],
        },
    }
    _write(dumps(doc) + "\n", o["out"])
    return EXIT_OK


def cmd_cover(cfg: RunConfig) -> int:
    o = cfg.options
    if o["trials"] < 1:
        raise ConfigError("--trials must be >= 1")
    path = o["params"]
    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        raw = json.loads(Path(path).read_text())
        params = CodebookParams.from_dict(raw)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad codebook parameters: {exc}") from exc
    rep = covering_experiment(params, o["trials"], o["threshold"], o["kind"])
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "params": params.to_dict(),
           **rep.to_dict()}
    _write(dumps(doc) + "\n", o["out"])
    return EXIT_OK


def cmd_exact_demo(cfg: RunConfig) -> int:
    o = cfg.options
    f = _units_factor(o["units"])
    pi = _load(o["pi"], "joint")
    if o["n"] < 1:
        raise ConfigError("--n must be >= 1")
    if o["r"] < 0 or o["r0"] < 0:
        raise ConfigError("rates must be non-negative")
    if o["rational"] and o["n"] > 6:
        raise ConfigError("--rational needs n <= 6")
    rep = end_to_end_demo(pi, o["n"], o["r0"] / f, o["r"] / f, o["seed"], eps=o.get("eps"),
                          rational=o["rational"])
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "units_of_rates": "nats",
           **rep.to_dict()}
    _write(dumps(doc) + "\n", o["out"])
    return EXIT_OK if rep.finite else EXIT_NUMERIC


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="synth", description="Exact channel synthesis toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (falls back to SYNTH_THREADS; runs are sequential)")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    r = sub.add_parser("regions", help="rate-region curves")
    r.add_argument("--dsbs", type=float, help="closed-form DSBS curves for this p")
    r.add_argument("--gaussian", type=float, help="closed-form Gaussian curves for this rho")
    r.add_argument("--pi", help="joint pmf JSON for a searched boundary")
    r.add_argument("--bound", default="exact-inner", help="exact-inner | exact-outer | cuff")
    r.add_argument("--r0-grid", default="0:1:21", help="a:b:n in the output units")
    r.add_argument("--grid", type=int, default=201, help="closed-form parameter points")
    r.add_argument("--compare", action="store_true", help="emit exact and TV curves together")
    r.add_argument("--restarts", type=int, default=32)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--units", default="bits")
    r.add_argument("--format", default="csv")
    r.add_argument("--out", default=None)

    c = sub.add_parser("coupling", help="max/min cross-entropy coupling LP")
    c.add_argument("--pi", required=True)
    c.add_argument("--px")
    c.add_argument("--py")
    c.add_argument("--sense", default="max")
    c.add_argument("--units", default="bits")
    c.add_argument("--out", default=None)

    v = sub.add_parser("cover", help="Renyi-covering Monte Carlo")
    v.add_argument("--params", required=True)
    v.add_argument("--trials", type=int, required=True)
    v.add_argument("--threshold", type=float, required=True, help="nats")
    v.add_argument("--kind", default="distributed", choices=["distributed", "centralized"])
    v.add_argument("--out", default=None)

    e = sub.add_parser("exact-demo", help="end-to-end exact synthesis")
    e.add_argument("--pi", required=True)
    e.add_argument("--n", type=int, default=8)
    e.add_argument("--r0", type=float, required=True)
    e.add_argument("--r", type=float, required=True)
    e.add_argument("--units", default="bits")
    e.add_argument("--eps", type=float, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--rational", action="store_true")
    e.add_argument("--out", default=None)
    return ap


_COMMANDS = {
    "regions": cmd_regions,
    "coupling": cmd_coupling,
    "cover": cmd_cover,
    "exact-demo": cmd_exact_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if k not in ("subcommand", "threads")}
    threads = args.threads or int(os.environ.get("SYNTH_THREADS", "1") or 1)
    cfg = RunConfig(args.subcommand, opts, threads)
    try:
        return _COMMANDS[args.subcommand](cfg)
    except (ConfigError, DistributionError) as exc:
        sys.stderr.write(f"synth: {exc}\n")
        return EXIT_CONFIG
    except (InfeasibleTransport, EmptyTypicalSet, BudgetExceeded, FloatingPointError) as exc:
        sys.stderr.write(f"synth: numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"synth: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
