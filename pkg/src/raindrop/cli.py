"""Command line: ``raindrop {shoot,trace,verify,flow,plot}``.

Settings come from built-in defaults, then an optional flat JSON config file
(``--config``), then command-line flags.  Every output carries the merged
config in its metadata (CSV tables in a ``.meta.json`` sidecar).

Exit codes: 0 success, 1 run or check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .flow import (
    StepRejected,
    circle_state,
    ellipse_state,
    line_state,
    run_flow,
    run_translation_test,
    stable_dt,
    FlowState,
)
from .lemmas import Extremum, ExtremumKind, run_suite
from .ode import DomainError, IntegrationError, IntegratorSettings
from .plot import render_svg
from .profile import CertificationError, build_profile, profile_from_slope
from .serialize import dumps_json, read_trace, trace_table, write_text, write_trace
from .shooting import BracketError, MonotonicityError, refine_interval

log = logging.getLogger("raindrop")

COMMANDS = ("shoot", "trace", "verify", "flow", "plot")
GENERATORS = ("line", "circle", "ellipse", "raindrop")

DEFAULTS: dict = {
    "rel_tol": 1e-12,
    "abs_tol": 1e-12,
    "max_step": 0.1,
    "event_tol": 1e-12,
    "horizon_schedule": [5.0, 10.0, 15.0, 20.0, 25.0],
    "horizon": None,
    "seed_lo": 1e-3,
    "seed_hi": 10.0,
    "tol": 1e-13,
    "max_iter": 60,
    "a_star": None,
    "report": None,
    "input": None,
    "ds": 1e-2,
    "generator": "ellipse",
    "n_vertices": 256,
    "radius": 1.0,
    "semi_axes": [2.0, 1.0],
    "dt": None,
    "T": None,
    "steps": 100,
    "scheme": None,
    "snapshot_every": 0,
    "seed": 0,
    "n_random": 50,
    "inject_violation": False,
    "inset": True,
    "out": None,
    "format": None,
}

DEFAULT_OUT = {
    "shoot": "shoot_report.json",
    "trace": "trace",
    "verify": "verify_report.json",
    "flow": "flow_diagnostics.json",
    "plot": "raindrop.svg",
}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _positive(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ConfigError(f"{name}: expected a positive number, got {v!r}")
    return float(v)


def _opt_positive(name, v):
    return None if v is None else _positive(name, v)


def _int(name, v, lo=0):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{name}: expected an integer >= {lo}, got {v!r}")
    return v


def _number(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name}: expected a finite number, got {v!r}")
    return float(v)


def _opt_str(name, v):
    if v is not None and not isinstance(v, str):
        raise ConfigError(f"{name}: expected a string, got {v!r}")
    return v


def _choice(options):
    def check(name, v):
        if v is not None and v not in options:
            raise ConfigError(f"{name}: expected one of {', '.join(options)}, got {v!r}")
        return v
    return check


def _bool(name, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{name}: expected true or false, got {v!r}")
    return v


def _positive_list(length=None):
    def check(name, v):
        if not isinstance(v, list) or not v or (length and len(v) != length):
            raise ConfigError(f"{name}: expected a list of {length or 'one or more'} positive numbers")
        return [_positive(f"{name}[{i}]", x) for i, x in enumerate(v)]
    return check


VALIDATORS = {
    "rel_tol": _positive,
    "abs_tol": _positive,
    "max_step": _positive,
    "event_tol": _positive,
    "horizon_schedule": _positive_list(),
    "horizon": _opt_positive,
    "seed_lo": _number,
    "seed_hi": _number,
    "tol": _positive,
    "max_iter": lambda n, v: _int(n, v, 1),
    "a_star": lambda n, v: None if v is None else _number(n, v),
    "report": _opt_str,
    "input": _opt_str,
    "ds": _positive,
    "generator": _choice(GENERATORS),
    "n_vertices": lambda n, v: _int(n, v, 8),
    "radius": _positive,
    "semi_axes": _positive_list(2),
    "dt": _opt_positive,
    "T": lambda n, v: None if v is None else _number(n, v),
    "steps": lambda n, v: _int(n, v, 0),
    "scheme": _choice(("explicit", "semi_implicit")),
    "snapshot_every": lambda n, v: _int(n, v, 0),
    "seed": lambda n, v: _int(n, v, 0),
    "n_random": lambda n, v: _int(n, v, 1),
    "inject_violation": _bool,
    "inset": _bool,
    "out": _opt_str,
    "format": _choice(("csv", "json")),
}


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
    return doc


def resolve_config(file_values: dict, flag_values: dict) -> dict:
    """Merge defaults < file < flags and validate every field."""
    cfg = dict(DEFAULTS)
    cfg.update(file_values)
    cfg.update({k: v for k, v in flag_values.items() if v is not None})
    out = {}
    for key, val in cfg.items():
        out[key] = VALIDATORS[key](key, val)
    if not out["seed_lo"] < out["seed_hi"]:
        raise ConfigError("seed_lo: must be smaller than seed_hi")
    if out["event_tol"] > out["rel_tol"]:
        raise ConfigError("event_tol: must not exceed rel_tol")
    sched = out["horizon_schedule"]
    if sched != sorted(sched):
        raise ConfigError("horizon_schedule: must be increasing")
    return out


def integrator_settings(cfg: dict) -> IntegratorSettings:
    return IntegratorSettings(rel_tol=cfg["rel_tol"], abs_tol=cfg["abs_tol"],
                              max_step=cfg["max_step"], event_tol=cfg["event_tol"])


def _metadata(command: str, cfg: dict) -> dict:
    return {"command": command, "version": __version__, "config": cfg}


def _out_path(cfg: dict, command: str, fmt: str | None = None) -> Path:
    if cfg["out"]:
        return Path(cfg["out"])
    name = DEFAULT_OUT[command]
    return Path(f"{name}.{fmt}") if command == "trace" else Path(name)


def _schedule(cfg: dict) -> list[float]:
    sched = list(cfg["horizon_schedule"])
    if cfg["horizon"] is not None:
        sched = [h for h in sched if h < cfg["horizon"]] + [cfg["horizon"]]
    return sched


def _shoot(cfg: dict):
    return refine_interval(cfg["seed_lo"], cfg["seed_hi"], _schedule(cfg),
                           integrator_settings(cfg), cfg["tol"], cfg["max_iter"])


def cmd_shoot(cfg: dict) -> int:
    report = _shoot(cfg)
    doc = report.to_dict()
    doc["metadata"] = _metadata("shoot", cfg)
    path = _out_path(cfg, "shoot")
    write_text(path, dumps_json(doc))
    print(f"a* = {report.a_star!r}  width {report.bracket_width:.3e}  "
          f"bounded to s = {report.bounded_horizon:g}  -> {path}")
    return 0


def _critical_slope(cfg: dict) -> tuple[float, float]:
    """``(a*, half span)`` from flags, a saved report, or a fresh shooting run."""
    if cfg["a_star"] is not None:
        return cfg["a_star"], cfg["horizon"] or 25.0
    if cfg["report"]:
        try:
            doc = json.loads(Path(cfg["report"]).read_text(encoding="utf-8"))
            a, S = float(doc["a_star"]), float(doc["bounded_horizon"])
        except OSError as exc:
            raise FileNotFoundError(f"report {cfg['report']}: {exc.strerror}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"report {cfg['report']}: missing a_star/bounded_horizon") from exc
        return a, cfg["horizon"] or S
    report = _shoot(cfg)
    return report.a_star, cfg["horizon"] or report.bounded_horizon


def cmd_trace(cfg: dict) -> int:
    fmt = cfg["format"] or "csv"
    path = _out_path(cfg, "trace", fmt)
    if cfg["input"]:
        table = read_trace(Path(cfg["input"]))
    else:
        a_star, S = _critical_slope(cfg)
        profile = profile_from_slope(a_star, S, integrator_settings(cfg))
        curve = build_profile(profile, cfg["ds"])
        meta = _metadata("trace", cfg)
        meta.update({"a_star": a_star, "half_span": S, "ds": cfg["ds"]})
        table = trace_table(profile, curve, meta)
    write_trace(table, path, fmt)
    print(f"{len(table)} samples -> {path}")
    return 0


def _violation() -> list[Extremum]:
    return [Extremum(1.0, 1.0, ExtremumKind.MAX, -1.0), Extremum(2.0, -1.0, ExtremumKind.MIN, 1.0)]


def cmd_verify(cfg: dict) -> int:
    settings = integrator_settings(cfg)
    report = _shoot(cfg)
    inject = _violation() if cfg["inject_violation"] else None
    results = run_suite(report, cfg["seed"], cfg["n_random"], settings, inject)
    passed = all(r.passed for r in results)
    doc = {"passed": passed, "a_star": report.a_star,
           "reports": [r.to_dict() for r in results],
           "metadata": _metadata("verify", cfg)}
    path = _out_path(cfg, "verify")
    write_text(path, dumps_json(doc))
    for r in results:
        extra = "" if r.passed else f"  (s = {r.witnesses.get('s_violation')})"
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.lemma}{extra}")
    return 0 if passed else 1


def _flow_input(cfg: dict) -> FlowState:
    table = read_trace(Path(cfg["input"]))
    curve = table.curve()
    return FlowState(curve.points, closed=False)


def cmd_flow(cfg: dict) -> int:
    gen = cfg["generator"]
    path = _out_path(cfg, "flow")
    meta = _metadata("flow", cfg)
    if cfg["input"] is None and gen == "raindrop":
        a_star, S = _critical_slope(cfg)
        curve = build_profile(profile_from_slope(a_star, S, integrator_settings(cfg)), cfg["ds"])
        T = 0.01 if cfg["T"] is None else cfg["T"]
        diag = run_translation_test(curve, T, cfg["dt"], cfg["scheme"] or "semi_implicit")
        doc = diag.to_dict()
        doc.update({"test": "translation", "a_star": a_star, "T": T, "metadata": meta})
        write_text(path, dumps_json(doc))
        print(f"translation deviation {diag.max_displacement_from_reference:.3e} "
              f"after {diag.steps} steps -> {path}")
        return 0

    n = cfg["n_vertices"]
    if cfg["input"]:
        state = _flow_input(cfg)
    elif gen == "line":
        state = line_state(n)
    elif gen == "circle":
        state = circle_state(n, cfg["radius"])
    else:
        state = ellipse_state(n, *cfg["semi_axes"])
    scheme = cfg["scheme"] or "explicit"
    dt = cfg["dt"] or stable_dt(state, scheme)
    steps = cfg["steps"] if cfg["T"] is None else int(math.ceil(cfg["T"] / dt - 1e-9))
    _, diag, snaps = run_flow(state, dt, steps, scheme, snapshot_every=cfg["snapshot_every"])
    doc = diag.to_dict(history=True)
    doc.update({"generator": "input" if cfg["input"] else gen, "metadata": meta})
    write_text(path, dumps_json(doc))
    if snaps:
        snap_doc = [{"t": s.t, "x": s.points[:, 0].tolist(), "y": s.points[:, 1].tolist()}
                    for s in snaps]
        write_text(path.with_name(path.name + ".snapshots.json"), dumps_json(snap_doc))
    print(f"{steps} steps of dt={dt:.3e}: length {diag.length:.12g}, "
          f"displacement {diag.max_displacement_from_reference:.3e} -> {path}")
    return 0


def cmd_plot(cfg: dict) -> int:
    if not cfg["input"]:
        raise FileNotFoundError("plot needs --input pointing at a trace file")
    src = Path(cfg["input"])
    if not src.exists():
        raise FileNotFoundError(f"input {src} does not exist")
    table = read_trace(src)
    svg = render_svg(table, inset=cfg["inset"])
    path = _out_path(cfg, "plot")
    write_text(path, svg)
    print(f"-> {path}")
    return 0


HANDLERS = {"shoot": cmd_shoot, "trace": cmd_trace, "verify": cmd_verify,
            "flow": cmd_flow, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raindrop",
                                description="Translating curve of the curve diffusion flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flat keys, see README)")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=("csv", "json"), help="trace output format")
    common.add_argument("--horizon", type=float, help="last shooting horizon / half span")
    common.add_argument("--tol", type=float, help="bisection tolerance on the slope")
    common.add_argument("--ds", type=float, help="arc-length sample step")
    common.add_argument("--seed-lo", dest="seed_lo", type=float)
    common.add_argument("--seed-hi", dest="seed_hi", type=float)
    common.add_argument("--dt", type=float, help="flow time step")
    common.add_argument("--T", dest="T", type=float, help="flow end time")
    common.add_argument("--n-vertices", dest="n_vertices", type=int)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--max-step", dest="max_step", type=float)
    common.add_argument("--event-tol", dest="event_tol", type=float)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("shoot", parents=[common], help="locate the critical slope")
    t = sub.add_parser("trace", parents=[common], help="tabulate the profile curve")
    t.add_argument("--a-star", dest="a_star", type=float, help="use this slope, skip shooting")
    t.add_argument("--report", help="shoot report to take a* from")
    t.add_argument("--input", help="existing trace to convert instead of computing")
    v = sub.add_parser("verify", parents=[common], help="run the lemma checks")
    v.add_argument("--seed", type=int, help="seed for random check instances")
    v.add_argument("--n-random", dest="n_random", type=int)
    v.add_argument("--inject-violation", dest="inject_violation", action="store_const",
                   const=True, help="replace the extrema chain by a violating pair")
    f = sub.add_parser("flow", parents=[common], help="run the discrete flow")
    f.add_argument("--generator", choices=GENERATORS)
    f.add_argument("--input", help="open curve from a trace file")
    f.add_argument("--a-star", dest="a_star", type=float)
    f.add_argument("--report")
    f.add_argument("--steps", type=int)
    f.add_argument("--scheme", choices=("explicit", "semi_implicit"))
    f.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    pl = sub.add_parser("plot", parents=[common], help="render a trace as SVG")
    pl.add_argument("--input", help="trace file (CSV or JSON)")
    pl.add_argument("--no-inset", dest="inset", action="store_const", const=False,
                    help="omit the curvature inset")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RAINDROP_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k in DEFAULTS}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, flags)
    except ConfigError as exc:
        print(f"raindrop {args.command}: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg)
    except StepRejected as exc:
        print(f"raindrop {args.command}: step rejected: {exc}", file=sys.stderr)
        return 1
    except (BracketError, MonotonicityError, IntegrationError, CertificationError,
            DomainError, FileNotFoundError) as exc:
        print(f"raindrop {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
