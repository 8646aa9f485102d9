"""Command-line front end: report, check, scan, verify.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid frame or
configuration, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import battery
from .curvature import curvature_pack, frame, residuals
from .errors import EmptyGridAfterGuards, ParseError, SingularFrame, ValidationError, ZeroVector
from .grid import GridSpec, evaluate_grid
from .metrics import BryantParams, FamilyParams, MetricSpec, Poly, bryant, euclidean, family, riemann_quadratic
from .oracle import FdSpec

SCHEMA_VERSION = 1
METRICS = ("euclidean", "riemann_quadratic", "family", "bryant")
CHECKS = ("landsberg", "weak-landsberg", "weak-berwald", "non-berwald", "flat-flag", "flatness-system", "berwald")
CSV_COLUMNS = ("r", "s", "u", "angle_index", "res_weak_berwald", "res_weak_landsberg",
               "res_landsberg_surface", "res_flat_flag", "valid")
FAMILY_KEYS = ("f1", "f2", "c0", "c1", "c2", "g_offset")
BRYANT_KEYS = ("c", "c0", "domain")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class RunConfig:
    metric: str = "bryant"
    params: dict = field(default_factory=dict)
    n: int = 2
    grid: GridSpec = GridSpec()
    tol: float = 1e-8
    nonzero_min: float = 0.05
    checks: tuple[str, ...] | None = None
    oracle: str = "semi"
    format: str = "json"
    out: str | None = None
    h_rel: float = 1e-5
    workers: int = 1

    def spec(self) -> MetricSpec:
        return make_spec(self.metric, self.params)

    def active_checks(self) -> tuple[str, ...]:
        if self.checks is not None:
            return self.checks
        return default_checks(self.metric, self.params)


# -- parsing --------------------------------------------------------------------------

def _number(text: str, key: str, line: int | None = None) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        try:
            return float(text)
        except ValueError:
            raise ParseError(f"not a number: {text!r}", line, key) from None


def _numbers(text: str, key: str, line: int | None = None) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ParseError("expected at least one number", line, key)
    return tuple(_number(p, key, line) for p in parts)


def _triple(text: str, key: str, line: int | None = None) -> tuple[float, float, int]:
    vals = _numbers(text, key, line)
    if len(vals) != 3 or vals[2] != int(vals[2]):
        raise ParseError("expected lo, hi, count", line, key)
    return vals[0], vals[1], int(vals[2])


def _integer(text: str, key: str, line: int | None = None) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"not an integer: {text!r}", line, key) from None


def _choice(text: str, key: str, options, line: int | None = None) -> str:
    value = text.strip()
    if value not in options:
        raise ParseError(f"must be one of {', '.join(options)}, got {value!r}", line, key)
    return value


def _apply(cfg: RunConfig, grid: dict, key: str, value: str, line: int | None = None) -> RunConfig:
    """Return cfg with one key = value assignment applied."""
    if key == "metric":
        return replace(cfg, metric=_choice(value, key, METRICS, line))
    if key in ("c",):
        return replace(cfg, params={**cfg.params, key: _number(value, key, line)})
    if key in FAMILY_KEYS or key == "c0":
        return replace(cfg, params={**cfg.params, key: _numbers(value, key, line)})
    if key == "domain":
        vals = _numbers(value, key, line)
        if len(vals) != 2:
            raise ParseError("expected lo, hi", line, key)
        return replace(cfg, params={**cfg.params, key: vals})
    if key == "n":
        return replace(cfg, n=_integer(value, key, line))
    if key in ("r_range", "s_fraction_range"):
        grid[key] = _triple(value, key, line)
        return cfg
    if key in ("angle_count", "seed"):
        grid[key] = _integer(value, key, line)
        return cfg
    if key == "tol":
        return replace(cfg, tol=_number(value, key, line))
    if key == "nonzero_min":
        return replace(cfg, nonzero_min=_number(value, key, line))
    if key == "h_rel":
        return replace(cfg, h_rel=_number(value, key, line))
    if key == "workers":
        return replace(cfg, workers=_integer(value, key, line))
    if key == "checks":
        names = tuple(p for p in value.replace(",", " ").split() if p)
        for name in names:
            _choice(name, key, CHECKS, line)
        return replace(cfg, checks=names)
    if key == "oracle":
        return replace(cfg, oracle=_choice(value, key, ("off", "semi", "full"), line))
    if key == "format":
        return replace(cfg, format=_choice(value, key, ("json", "csv"), line))
    if key == "out":
        return replace(cfg, out=value.strip() or None)
    raise ParseError(f"unknown key {key!r}", line, key)


def _grid_from(base: GridSpec, grid: dict) -> GridSpec:
    try:
        return GridSpec(grid.get("r_range", base.r_range), grid.get("s_fraction_range", base.s_fraction_range),
                        grid.get("angle_count", base.angle_count), grid.get("seed", base.seed))
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a flat ``key = value`` document (``#`` starts a comment)."""
    cfg = base or RunConfig()
    grid: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError("expected key = value", lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ParseError("missing key", lineno)
        cfg = _apply(cfg, grid, key, value, lineno)
    cfg = replace(cfg, grid=_grid_from(cfg.grid, grid))
    validate(cfg)
    return cfg


def parse_grid_flag(text: str) -> dict:
    """``r=lo:hi:count,s=lo:hi:count,angles=k,seed=k`` (any subset)."""
    out = {}
    names = {"r": "r_range", "s": "s_fraction_range", "angles": "angle_count", "seed": "seed"}
    for item in (p.strip() for p in text.split(",") if p.strip()):
        if "=" not in item:
            raise ParseError(f"grid item {item!r} is not name=value", field="grid")
        name, value = (p.strip() for p in item.split("=", 1))
        if name not in names:
            raise ParseError(f"unknown grid item {name!r}", field="grid")
        key = names[name]
        out[key] = _triple(value.replace(":", " "), "grid") if key.endswith("range") else _integer(value, "grid")
    return out


def _is_one_third(c) -> bool:
    return c is not None and abs(c - 1.0 / 3.0) < 1e-12


def validate(cfg: RunConfig):
    if cfg.n < 2:
        raise ValidationError("n must be at least 2")
    if not cfg.tol > 0 or not cfg.nonzero_min > 0:
        raise ValidationError("tolerances must be positive")
    if not 1e-8 <= cfg.h_rel <= 1e-2:
        raise ValidationError("h_rel must lie in [1e-8, 1e-2]")
    if cfg.workers < 1:
        raise ValidationError("workers must be at least 1")
    allowed = {"bryant": BRYANT_KEYS, "family": FAMILY_KEYS}.get(cfg.metric, ())
    for key in cfg.params:
        if key not in allowed:
            raise ValidationError(f"parameter {key!r} does not apply to metric {cfg.metric!r}")
    if cfg.metric == "bryant" and _is_one_third(cfg.params.get("c", 2.0)) and "non-berwald" in cfg.active_checks():
        raise ValidationError("the non-Berwald property of the Bryant surface requires c != 1/3")
    if "flatness-system" in cfg.active_checks() and cfg.metric not in ("family", "bryant"):
        raise ValidationError("flatness-system needs the coefficient functions of a family or bryant metric")
    cfg.spec()  # parameter invariants


def make_spec(metric: str, params: dict) -> MetricSpec:
    if metric == "euclidean":
        return euclidean()
    if metric == "riemann_quadratic":
        return riemann_quadratic()
    if metric == "family":
        return family(FamilyParams(**{k: Poly(v) for k, v in params.items()}))
    if metric == "bryant":
        kw = {}
        if "c" in params:
            kw["c"] = params["c"]
        if "c0" in params:
            kw["c0"] = Poly(params["c0"])
        if "domain" in params:
            kw["domain"] = tuple(params["domain"])
        return bryant(BryantParams(**kw))
    raise ValidationError(f"unknown metric {metric!r}")


def default_checks(metric: str, params: dict) -> tuple[str, ...]:
    if metric == "euclidean":
        return ("landsberg", "weak-landsberg", "weak-berwald", "berwald", "flat-flag")
    if metric == "riemann_quadratic":
        return ("landsberg", "weak-landsberg", "berwald")
    if metric == "family":
        return ("landsberg", "weak-landsberg")
    if _is_one_third(params.get("c", 2.0)):
        return ("landsberg", "weak-landsberg", "flat-flag", "flatness-system", "weak-berwald", "berwald")
    return ("landsberg", "weak-landsberg", "flat-flag", "flatness-system", "non-berwald")


# -- output -----------------------------------------------------------------------------

def _clean(obj):
    """numpy to plain Python; non-finite floats become strings so the JSON stays valid."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, allow_nan=False)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- commands ---------------------------------------------------------------------------

def cmd_report(cfg: RunConfig, x, y) -> dict:
    spec = cfg.spec()
    f = frame(x, y, spec)
    f.require_valid()
    pack = curvature_pack(spec, f)
    rep = residuals(spec, f)
    aux = pack.aux
    scalars = {k: aux.get(k) for k in ("L1", "L2", "L3", "L4", "L5", "L6", "J1", "J2", "R1", "R3", "U", "W")}
    scalars.update({"Ric": pack.Ric, "K": pack.K})
    return {
        "schema_version": SCHEMA_VERSION,
        "metric": spec.describe(),
        "frame": {"x": f.x, "y": f.y, "r": f.r, "u": f.u, "s": f.s},
        "spray": {"P": pack.spray.P, "Q": pack.spray.Q, "G": pack.spray.G},
        "tensors": {"g": pack.g, "g_inv": pack.g_inv, "B": pack.B, "E": pack.E, "L": pack.L, "J": pack.J},
        "scalars": scalars,
        "residuals": rep.as_dict(),
    }


def _frame_rows(results) -> list[dict]:
    rows = []
    for res in results:
        f = res.item.frame
        row = {"r": f.r, "s": f.s, "u": f.u, "angle_index": res.item.angle_index, "valid": res.valid}
        if res.valid:
            row.update({k: getattr(res.report, k) for k in CSV_COLUMNS[4:8]})
        rows.append(row)
    return rows


def _summary(values) -> dict:
    vals = np.abs(np.asarray([v for v in values if v is not None], dtype=float))
    if vals.size == 0:
        return {"max": None, "median": None, "min": None}
    return {"max": float(vals.max()), "median": float(np.median(vals)), "min": float(vals.min())}


def run_checks(cfg: RunConfig, spec: MetricSpec, results) -> dict:
    valid = [res for res in results if res.valid]
    out = {}
    for name in cfg.active_checks():
        if name == "landsberg":
            stats = _summary(res.report.res_landsberg_surface for res in valid)
            out[name] = {**stats, "passed": stats["max"] is not None and stats["max"] <= cfg.tol}
        elif name == "weak-landsberg":
            stats = _summary(res.report.res_weak_landsberg for res in valid)
            out[name] = {**stats, "passed": stats["max"] is not None and stats["max"] <= cfg.tol}
        elif name == "weak-berwald":
            stats = _summary(res.report.res_weak_berwald for res in valid)
            out[name] = {**stats, "passed": stats["max"] <= cfg.tol}
        elif name == "non-berwald":
            stats = _summary(res.report.res_weak_berwald for res in valid)
            entry = {**stats, "threshold": cfg.nonzero_min, "passed": stats["min"] > cfg.nonzero_min}
            pred = getattr(spec, "predicted_weak_berwald", None)
            if pred is not None:
                # the combination should equal its predicted non-zero value frame by frame
                dev = []
                for res in valid:
                    p = pred(res.item.frame.r, res.item.frame.s, cfg.n)
                    dev.append(abs(res.report.res_weak_berwald - p) / abs(p))
                entry["max_rel_deviation_from_prediction"] = max(dev)
            entry["status"] = "non-berwald confirmed" if entry["passed"] else "non-berwald not confirmed"
            out[name] = entry
        elif name == "flat-flag":
            stats = _summary(res.report.res_flat_flag for res in valid)
            out[name] = {**stats, "passed": stats["max"] <= cfg.tol}
        elif name == "flatness-system":
            stats = _summary(max(map(abs, res.report.res_flatness_system)) for res in valid)
            out[name] = {**stats, "passed": stats["max"] <= cfg.tol}
        elif name == "berwald":
            vals = [np.linalg.norm(res.pack.B) * res.item.frame.u / res.pack.spray.scale for res in valid]
            stats = _summary(vals)
            out[name] = {**stats, "measure": "|B| u / kappa", "passed": stats["max"] <= cfg.tol}
    return out


def cmd_check(cfg: RunConfig) -> tuple[dict, str]:
    spec = cfg.spec()
    results = evaluate_grid(spec, cfg.grid, cfg.n, want_pack="berwald" in cfg.active_checks(),
                            workers=cfg.workers)
    checks = run_checks(cfg, spec, results)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "metric": spec.describe(),
        "n": cfg.n,
        "frames": len(results),
        "valid_frames": sum(res.valid for res in results),
        "tol": cfg.tol,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks.values()),
    }
    return summary, rows_to_csv(CSV_COLUMNS, _frame_rows(results))


SCAN_COLUMNS = ("parameter", "value", "valid_frames", "max_abs_res_landsberg_surface",
                "max_abs_res_weak_landsberg", "max_abs_res_flat_flag", "min_abs_res_weak_berwald",
                "min_res_weak_berwald", "max_res_weak_berwald")


def _scan_params(cfg: RunConfig, parameter: str, value: float) -> dict:
    params = dict(cfg.params)
    if parameter == "c":
        if cfg.metric != "bryant":
            raise ValidationError("parameter c applies to the bryant metric only")
        params["c"] = value
        return params
    name, _, index = parameter.partition("_")
    if index == "" and name in FAMILY_KEYS and name != "g_offset":
        index = "0"
    allowed = ("c0",) if cfg.metric == "bryant" else ("f1", "f2", "c0", "c1", "c2")
    if cfg.metric not in ("bryant", "family") or name not in allowed or not index.isdigit():
        raise ValidationError(f"cannot scan {parameter!r} for metric {cfg.metric!r}; "
                              "use c or <coefficient>_<power> such as f2_2")
    k = int(index)
    coeffs = list(params.get(name, (0.0,)))
    coeffs += [0.0] * (k + 1 - len(coeffs))
    coeffs[k] = value
    params[name] = tuple(coeffs)
    return params


def cmd_scan(cfg: RunConfig, parameter: str, values) -> str:
    values = list(values)
    if not values:
        raise ValidationError("scan needs at least one value")
    rows = []
    for value in values:
        params = _scan_params(cfg, parameter, value)
        spec = make_spec(cfg.metric, params)
        results = [res for res in evaluate_grid(spec, cfg.grid, cfg.n, workers=cfg.workers) if res.valid]
        wb = [res.report.res_weak_berwald for res in results]
        ls = [res.report.res_landsberg_surface for res in results if res.report.res_landsberg_surface is not None]
        wl = [res.report.res_weak_landsberg for res in results if res.report.res_weak_landsberg is not None]
        rows.append({
            "parameter": parameter, "value": value, "valid_frames": len(results),
            "max_abs_res_landsberg_surface": max(map(abs, ls)) if ls else None,
            "max_abs_res_weak_landsberg": max(map(abs, wl)) if wl else None,
            "max_abs_res_flat_flag": max(abs(res.report.res_flat_flag) for res in results),
            "min_abs_res_weak_berwald": min(map(abs, wb)),
            "min_res_weak_berwald": min(wb),
            "max_res_weak_berwald": max(wb),
        })
    return rows_to_csv(SCAN_COLUMNS, rows)


def cmd_verify(cfg: RunConfig, seed: int = 0) -> dict:
    t0 = time.perf_counter()
    results = battery.run_battery(oracle=cfg.oracle, seed=seed, fd=FdSpec(h_rel=cfg.h_rel))
    decided = [r for r in results if r.passed is not None]
    return {
        "schema_version": SCHEMA_VERSION,
        "oracle": cfg.oracle,
        "seed": seed,
        "criteria": [r.as_dict() for r in results],
        "all_passed": all(r.passed for r in decided),
        "seconds": time.perf_counter() - t0,
    }


# -- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--metric", choices=METRICS)
    common.add_argument("--c", help="Bryant constant c (fractions such as 1/3 accepted)")
    common.add_argument("--c0", help="c0 polynomial coefficients, lowest power first, e.g. '0,0.1'")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="any config key, e.g. --set f2=1 (repeatable)")
    common.add_argument("--n", type=int)
    common.add_argument("--grid", help="r=lo:hi:count,s=lo:hi:count,angles=k,seed=k")
    common.add_argument("--tol", type=float)
    common.add_argument("--oracle", choices=("off", "semi", "full"))
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--out")
    common.add_argument("--seed", type=int)

    ap = argparse.ArgumentParser(prog="sphfinsler",
                                 description="Curvature of spherically symmetric Finsler metrics.")
    sub = ap.add_subparsers(dest="command", required=True)
    rep = sub.add_parser("report", parents=[common], help="every tensor and residual at one frame")
    rep.add_argument("--x", required=True, help="base point, comma separated")
    rep.add_argument("--y", required=True, help="direction, comma separated")
    chk = sub.add_parser("check", parents=[common], help="condition checks over a grid")
    chk.add_argument("--csv", help="also write the per-frame CSV here")
    chk.add_argument("--checks", help=f"comma separated subset of {', '.join(CHECKS)}")
    scn = sub.add_parser("scan", parents=[common], help="sweep one parameter")
    scn.add_argument("--parameter", required=True, help="c, or <coefficient>_<power> such as c0_1")
    scn.add_argument("--values", required=True, help="comma separated values")
    sub.add_parser("verify", parents=[common], help="run the acceptance battery")
    return ap


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.command == "verify":
        cfg = replace(cfg, oracle="full")
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        cfg = parse_config(text, cfg)
    lines = []
    if args.metric:
        lines.append(f"metric = {args.metric}")
    if args.c is not None:
        lines.append(f"c = {args.c}")
    if args.c0 is not None:
        lines.append(f"c0 = {args.c0}")
    if args.n is not None:
        lines.append(f"n = {args.n}")
    if args.tol is not None:
        lines.append(f"tol = {args.tol!r}")
    if args.oracle:
        lines.append(f"oracle = {args.oracle}")
    if args.format:
        lines.append(f"format = {args.format}")
    if args.out:
        lines.append(f"out = {args.out}")
    if getattr(args, "checks", None):
        lines.append(f"checks = {args.checks}")
    for item in args.set:
        if "=" not in item:
            raise ParseError(f"--set expects KEY=VALUE, got {item!r}")
        lines.append(item)
    if args.metric and args.metric != cfg.metric:
        cfg = replace(cfg, params={})
    cfg = parse_config("\n".join(lines), cfg)
    grid = {}
    if args.grid:
        grid.update(parse_grid_flag(args.grid))
    if args.seed is not None:
        grid["seed"] = args.seed
    if grid:
        cfg = replace(cfg, grid=_grid_from(cfg.grid, grid))
    return cfg


def _vector(text: str, name: str) -> np.ndarray:
    return np.array(_numbers(text, name), dtype=float)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "report":
            payload = cmd_report(cfg, _vector(args.x, "x"), _vector(args.y, "y"))
            _emit(dumps(payload), cfg.out)
            return EXIT_OK
        if args.command == "check":
            summary, table = cmd_check(cfg)
            if args.csv:
                Path(args.csv).write_text(table, encoding="utf-8")
            _emit(table if cfg.format == "csv" else dumps(summary), cfg.out)
            return EXIT_OK if summary["all_passed"] else EXIT_FAIL
        if args.command == "scan":
            values = [_number(v, "values") for v in args.values.replace(",", " ").split()]
            _emit(cmd_scan(cfg, args.parameter, values), cfg.out)
            return EXIT_OK
        if args.command == "verify":
            payload = cmd_verify(cfg, seed=cfg.grid.seed)
            for item in payload["criteria"]:
                status = {True: "PASS", False: "FAIL", None: "SKIP"}[item["passed"]]
                print(f"[{status}] criterion {item['criterion']}: {item['title']}", file=sys.stderr)
            _emit(dumps(payload), cfg.out)
            return EXIT_OK if payload["all_passed"] else EXIT_FAIL
    except (ParseError, ValidationError, SingularFrame, ZeroVector, EmptyGridAfterGuards) as exc:
        record = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ParseError):
            record.update({"line": exc.line, "field": exc.field})
        sys.stdout.write(dumps(record) + "\n")
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - the contract maps everything else to exit 3
        sys.stdout.write(dumps({"schema_version": SCHEMA_VERSION, "error": type(exc).__name__,
                                "message": str(exc)}) + "\n")
        return EXIT_INTERNAL
    return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
