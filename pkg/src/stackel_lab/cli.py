"""Command-line front end: ``stackel-lab metric|geodesic|web|billiard|verify``.

Exit codes: 0 success, 1 precondition or configuration error, 2 verification
failure. Reports are JSON with sorted keys and numbers rounded to 15
significant digits, so identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, shipped, verify
from .billiard import GrazingWarning, billiard_config_from_json, billiard_run, caustic_check, conserved_values
from .dynamics import DomainError, IntegrationError, PhasePoint, hamiltonian_flow
from .staeckel import (SignatureError, SingularityError, certify, integral_coeffs, metric_coeffs,
                       staeckel_from_json)
from .webs import (DegeneracyError, RealnessError, curvature_decay, estimate_web_rank, reflection_permutes,
                   web_directions, web_spec_from_json)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2


class ConfigError(Exception):
    """Unreadable or invalid configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Round floats to 15 significant digits; non-finite values become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.15g}") if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


def read_config(path: str) -> dict:
    """Parse a JSON file; a config name without a path falls back to the shipped fixtures."""
    p = Path(path)
    try:
        text = p.read_text() if p.exists() else shipped.path(path).read_text()
    except (FileNotFoundError, IsADirectoryError, OSError):
        raise ConfigError(f"cannot read config {path!r}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _emit(out: str | None, files: dict, report: dict):
    """Write ``report.json`` plus extra files to ``out``, or the report to stdout."""
    text = dumps(report)
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(text)
    for name, payload in files.items():
        (d / name).write_text(payload)


def _fmt_row(vals) -> str:
    return ",".join(f"{float(v):.15g}" for v in vals)


# -- commands ------------------------------------------------------------------------

def cmd_metric(args) -> int:
    cfg = read_config(args.config)
    try:
        data, box = staeckel_from_json(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    grid_n = int(cfg.get("grid_n", 9))
    cert = certify(data, box, grid_n)
    report = {"command": "metric", "config": cfg, "certificate": cert.to_json_obj()}
    files = {}
    if cert.certified:
        table_n = int(cfg.get("table_n", 3))
        lines = ["x,y,z,g_x,g_y,g_z,I2_x,I2_y,I2_z,I3_x,I3_y,I3_z"]
        for pt in box.grid(table_n).reshape(-1, 3):
            g = metric_coeffs(data, pt)
            i2, i3 = integral_coeffs(data, pt)
            lines.append(_fmt_row([*pt, *g, *i2, *i3]))
        files["coefficients.csv"] = "\n".join(lines) + "\n"
    else:
        print(f"certification failed: {cert.violation}", file=sys.stderr)
    _emit(args.out, files, report)
    return EXIT_OK if cert.certified else EXIT_CONFIG


def cmd_geodesic(args) -> int:
    cfg = read_config(args.config)
    try:
        data, box = staeckel_from_json(cfg["metric"])
        start = PhasePoint.from_array(cfg["start"])
        t_end = float(cfg.get("t_end", 10.0))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad geodesic config: {exc}") from None
    tol = float(args.tol if args.tol is not None else cfg.get("tol", 1e-10))
    cert = certify(data, box)
    if not cert.certified:
        raise ConfigError(f"metric is not certified on its box: {cert.violation}")
    try:
        traj = hamiltonian_flow(data, start, t_end, tol, box=box)
    except DomainError as exc:
        _emit(args.out, {}, {"command": "geodesic", "error": "domain", "message": str(exc)})
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    report = {"command": "geodesic", "t_end": t_end, "tol": tol, "trajectory": traj.to_json_obj()}
    files = {"trajectory.csv": traj.to_csv()}
    sweep = cfg.get("tol_sweep")
    if sweep:
        rows = []
        for t in sweep:
            tr = hamiltonian_flow(data, start, t_end, float(t), box=box)
            d = tr.drift()
            rows.append({"tol": float(t), "steps": tr.stats["steps"], "drift_H": d[0], "drift_I2": d[1],
                         "drift_I3": d[2], "t_final": float(tr.times[-1])})
        report["tol_sweep"] = rows
        files["drift_sweep.csv"] = "tol,steps,drift_H,drift_I2,drift_I3,t_final\n" + "".join(
            _fmt_row([r["tol"], r["steps"], r["drift_H"], r["drift_I2"], r["drift_I3"], r["t_final"]]) + "\n"
            for r in rows)
    _emit(args.out, files, report)
    return EXIT_OK


def cmd_web(args) -> int:
    cfg = read_config(args.config)
    try:
        spec, ctx = web_spec_from_json(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad web config: {exc}") from None
    report = {"command": "web", "label": spec.label, "surfaces": list(spec.surfaces), "grid_n": spec.n}
    files = {}
    try:
        rank = estimate_web_rank(spec, tol=float(cfg.get("tol", 1e-8)), jobs=args.jobs)
    except DegeneracyError as exc:
        _emit(args.out, {}, {**report, "error": "degenerate", "message": str(exc)})
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    report["rank"] = rank.to_json_obj()
    if "data" in ctx and "point" in cfg:
        try:
            ws = web_directions(ctx["data"], cfg["point"], ctx["lam"], ctx["mu"])
        except (RealnessError, DegeneracyError) as exc:
            raise ConfigError(f"web directions undefined at {cfg['point']}: {exc}") from None
        report["directions"] = ws.to_json_obj()
        report["mirrors"] = reflection_permutes(ws).to_json_obj()
        files["directions.csv"] = "e_k,e_l,tau_x,tau_y,tau_z\n" + "".join(
            _fmt_row([*s, *d]) + "\n" for s, d in zip(ws.signs, ws.directions))
    if len(spec.surfaces) == 2 and "point" in cfg:
        dec = curvature_decay(spec, cfg["point"], cfg.get("h", [0.02, 0.01, 0.005, 0.0025]))
        report["curvature"] = dec
        lines = ["h,exists,norm,order"]
        for k, h in enumerate(dec["h"]):
            order = dec["orders"][k - 1] if k > 0 else float("nan")
            lines.append(f"{h:.15g},{int(dec['exists'][k])},{_num(dec['norms'][k])},{_num(order)}")
        files["curvature.csv"] = "\n".join(lines) + "\n"
    _emit(args.out, files, report)
    return EXIT_OK


def _num(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{float(v):.15g}"


def cmd_billiard(args) -> int:
    raw = read_config(args.config)
    try:
        cfg = billiard_config_from_json(raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad billiard config: {exc}") from None
    tol = float(args.tol if args.tol is not None else cfg["tol"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GrazingWarning)
        try:
            result = billiard_run(cfg["data"], cfg["walls"], cfg["start"], cfg["n_bounces"], tol,
                                  box=cfg["box"], t_max=cfg["t_max"])
        except (DomainError, ValueError, IntegrationError) as exc:
            _emit(args.out, {}, {"command": "billiard", "error": type(exc).__name__, "message": str(exc)})
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG
    for w in caught:
        if issubclass(w.category, GrazingWarning):
            print(f"warning: {w.message}", file=sys.stderr)
    report = {"command": "billiard", "tol": tol, "walls": [w.to_json_obj() for w in cfg["walls"]],
              "result": result.to_json_obj(), "grazing": any(issubclass(w.category, GrazingWarning) for w in caught)}
    files = {"trajectory.csv": result.to_csv(cfg["data"])}
    lines = ["bounce,t,wall,H,I2,I3,lambda,mu"]
    for k, b in enumerate(result.bounces):
        v = b.after
        lines.append(f"{k + 1},{b.time:.15g},{b.wall}," + _fmt_row([v[q] for q in ("H", "I2", "I3", "lambda", "mu")]))
    files["bounces.csv"] = "\n".join(lines) + "\n"
    pencil = raw.get("pencil")
    if pencil is None and result.states.size:
        v = conserved_values(cfg["data"], result.states[0])
        pencil = {"lambda": v["lambda"], "mu": v["mu"]}
    if pencil is not None:
        tps = caustic_check(cfg["data"], result, float(pencil["lambda"]), float(pencil["mu"]))
        report["turning_points"] = [tp.to_json_obj() for tp in tps]
        files["turning_points.csv"] = "axis,t,coordinate,residual\n" + "".join(
            f"{'xyz'[tp.axis]},{tp.time:.15g},{tp.coordinate:.15g},{tp.residual:.15g}\n" for tp in tps)
    _emit(args.out, files, report)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.selector not in verify.SELECTORS:
        raise ConfigError(f"unknown selector {args.selector!r}; choose from {', '.join(verify.SELECTORS)}")
    seed = args.seed
    if seed is None and args.config is not None:
        seed = read_config(args.config).get("seed")
    rep = verify.run(args.selector, seed=seed, jobs=args.jobs)
    for r in rep["results"]:
        print(r.summary())
        for c in r.failures():
            print(f"    {c.name}: {c.value!r} {c.op} {c.limit!r} fails")
    report = {k: v for k, v in rep.items() if k != "results"}
    if args.out is not None:
        _emit(args.out, {}, report)
    print("all criteria passed" if rep["passed"] else "verification FAILED")
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


# -- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: report to stdout)")
    common.add_argument("--tol", type=float, help="integration tolerance override")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for batch items")
    parser = _Parser(prog="stackel-lab", description="Staeckel geodesic-flow laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, help_ in (("metric", cmd_metric, "certify a metric and tabulate its coefficients"),
                            ("geodesic", cmd_geodesic, "integrate a geodesic"),
                            ("web", cmd_web, "rank and directions of a geodesic web"),
                            ("billiard", cmd_billiard, "simulate a Staeckel billiard")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", required=True, help="JSON config file or shipped fixture name")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", parents=[common], help="run the property checks")
    p.add_argument("selector", nargs="?", default="all", help=f"one of {', '.join(verify.SELECTORS)}")
    p.add_argument("--config", help="JSON file with a 'seed'")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("stackel-lab: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"stackel-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularityError, SignatureError, DomainError) as exc:
        print(f"stackel-lab: precondition violated: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
