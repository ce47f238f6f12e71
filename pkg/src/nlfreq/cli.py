"""Command-line batch runner.

Usage::

    nlfreq SUBCOMMAND --config run.json --out results/ [--workers N] [--format csv|json]

Subcommands: ``sweep``, ``point``, ``dissipativity``, ``multitone``,
``loopshape`` and ``lti-oracle``. Exit status is 0 on success, 2 when any
point failed to reach a steady state (partial results are still written)
and 1 on a configuration error.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, _backend
from .analysis import FrequencyResponseSample, frequency_response
from .config import load_config
from .engine import settle_to_steady_state
from .errors import ConfigError, NlfreqError, NoConvergence
from .loopshaping import check_origin_stability, check_spec, compose_closed_loop
from .model import ParamPoint
from .multitone import superposition_report
from .sweep import lti_oracle_surface, run_certificates, run_sweep

__all__ = ["main", "build_parser", "format_value"]

EXIT_OK, EXIT_CONFIG, EXIT_NO_CONVERGENCE = 0, 1, 2

SUBCOMMANDS = ("sweep", "point", "dissipativity", "multitone", "loopshape", "lti-oracle")


def format_value(v):
    """CSV cell text: floats round-trip exactly via ``.17g``."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, complex):
        return {"re": _jsonable(v.real), "im": _jsonable(v.imag)}
    return v


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _emit(args, name, columns, rows, extra, started):
    """Write the table (CSV or JSON) and the JSON sidecar."""
    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, name)
    sidecar = {
        "command": args.command,
        "version": __version__,
        "backend": _backend.BACKEND,
        "config": args.raw_config,
        "rows": len(rows),
        "failures": sum(1 for r in rows if r.get("status")),
        "timings": {"total_s": time.perf_counter() - started},
    }
    sidecar.update(extra)
    if args.format == "csv":
        _write_csv(base + ".csv", columns, rows)
    else:
        sidecar["columns"] = columns
        sidecar["data"] = rows
    _write_json(base + ".json", sidecar)


def _row_dicts(rows):
    return [asdict(r) for r in rows]


def _exit_for(rows):
    if any(str(r.get("status", "")).startswith("no_convergence") for r in rows):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _point(args, cfg):
    if (args.varpi is None) != (args.a_u is None):
        raise ConfigError("", "--varpi and --a-u must be given together")
    if args.varpi is not None:
        if not (args.varpi > 0 and args.a_u > 0):
            raise ConfigError("", "--varpi and --a-u must be positive")
        return ParamPoint(args.varpi, args.a_u)
    return ParamPoint(cfg.grid.varpi_values[0], cfg.grid.a_u_values[0])


def cmd_sweep(args, cfg, started):
    rows = _row_dicts(run_sweep(cfg.plant, cfg.generator, cfg.grid, cfg.settings, args.workers))
    _emit(args, "sweep", _SWEEP_COLUMNS, rows, {}, started)
    return _exit_for(rows)


def cmd_lti_oracle(args, cfg, started):
    if cfg.realization is None:
        raise ConfigError("model.builtin", "lti-oracle needs the 'lti' built-in model")
    rows = _row_dicts(lti_oracle_surface(cfg.realization, cfg.grid))
    _emit(args, "lti-oracle", _SWEEP_COLUMNS, rows, {}, started)
    return EXIT_OK


def cmd_point(args, cfg, started):
    omega = _point(args, cfg)
    try:
        rec = settle_to_steady_state(cfg.plant, cfg.generator, omega, cfg.settings)
    except NoConvergence as exc:
        _emit(args, "point", ["status"], [{"status": f"no_convergence: {exc}"}],
              {"varpi": omega.varpi, "a_u": omega.a_u}, started)
        return EXIT_NO_CONVERGENCE
    s = frequency_response(rec)
    cols = (["t"] + [f"u{i + 1}" for i in range(rec.u.shape[1])]
            + [f"udot{i + 1}" for i in range(rec.udot.shape[1])]
            + [f"y{i + 1}" for i in range(rec.y.shape[1])]
            + [f"x{i + 1}" for i in range(rec.x.shape[1])])
    data = np.column_stack([rec.t, rec.u, rec.udot, rec.y, rec.x])
    rows = [dict(zip(cols, r)) for r in data.tolist()]
    summary = {
        "varpi": omega.varpi, "a_u": omega.a_u, "period": rec.period,
        "periods_simulated": rec.periods_simulated, "residual": rec.final_residual,
        "udot_source": rec.udot_source, "alpha": s.alpha, "theta": s.theta,
        "radius": s.radius, "gamma": s.gamma, "lambda1": s.lambda1, "lambda2": s.lambda2,
        "residual_sq": s.residual_sq, "degenerate": s.degenerate,
    }
    _emit(args, "point", cols, rows, {"response": summary}, started)
    return EXIT_OK


def cmd_dissipativity(args, cfg, started):
    if cfg.supply is None:
        raise ConfigError("supply", "dissipativity needs a supply rate")
    rows = _row_dicts(run_certificates(cfg.plant, cfg.generator, cfg.grid, cfg.supply,
                                       cfg.settings, args.workers))
    cols = list(rows[0]) if rows else []
    non_border = [r for r in rows if not r["status"] and not r["borderline"]]
    extra = {"all_consistent": all(r["consistent"] for r in non_border),
             "holds_everywhere": bool(non_border) and all(r["verdict"] == "holds" for r in non_border)}
    _emit(args, "dissipativity", cols, rows, extra, started)
    return _exit_for(rows)


def cmd_multitone(args, cfg, started):
    if cfg.multi is None:
        raise ConfigError("multi", "multitone needs a 'multi' section")
    try:
        rep = superposition_report(cfg.plant, cfg.generator, cfg.multi, cfg.settings)
    except NoConvergence as exc:
        _emit(args, "multitone", ["status"], [{"status": f"no_convergence: {exc}"}], {}, started)
        return EXIT_NO_CONVERGENCE
    rows = []
    for i, (om, _) in enumerate(cfg.multi.entries):
        rows.append({"index": i, "varpi": om.varpi, "a_u": om.a_u,
                     "weight_norm": rep.weight_norms[i], "alpha": rep.alphas[i],
                     "r_cos_theta": rep.r_cos[i], "r_sin_theta": rep.r_sin[i]})
    summary = {k: getattr(rep, k) for k in ("period", "y_norm", "u_y_inner", "udot_y_inner",
                                            "b_star", "c_star", "d_star", "triangle_bound")}
    _emit(args, "multitone", list(rows[0]), rows, {"report": summary}, started)
    return EXIT_OK


def cmd_loopshape(args, cfg, started):
    fb = cfg.feedback
    if fb is None:
        raise ConfigError("feedback", "loopshape needs a 'feedback' section")
    try:
        closed = compose_closed_loop(cfg.plant, fb.kappa, fb.f_p, fb.params)
    except NlfreqError as exc:
        raise ConfigError("feedback", str(exc)) from None
    stab = check_origin_stability(closed, horizon=fb.horizon)
    rows = _row_dicts(run_sweep(closed, cfg.generator, cfg.grid, cfg.settings, args.workers))
    extra = {"stability": {"verdict": stab.verdict, "evidence": stab.evidence,
                           "eigenvalues": [complex(z) for z in stab.eigenvalues or ()]},
             "feedback": fb.name}
    if cfg.spec is not None:
        samples = [_row_sample(r) for r in rows if not r["status"]]
        rep = check_spec(samples, cfg.spec)
        extra["spec"] = {"inside": rep.inside and len(samples) == len(rows),
                         "worst_index": rep.worst, "worst_margin": rep.worst_margin,
                         "failed_points": len(rows) - len(samples)}
    _emit(args, "loopshape", _SWEEP_COLUMNS, rows, extra, started)
    return _exit_for(rows)


def _row_sample(row):
    if row["degenerate"]:
        nan = math.nan
        return FrequencyResponseSample(None, row["alpha"], nan, nan, nan, nan, 0j,
                                       nan, nan, nan, True)
    return FrequencyResponseSample.from_polar(None, row["alpha"], row["theta_rad"],
                                              row["radius"])


_SWEEP_COLUMNS = ["varpi", "a_u", "alpha", "theta_rad", "theta_unwrapped", "radius",
                  "re_gamma", "im_gamma", "degenerate", "periods_simulated", "residual",
                  "residual_sq", "status"]

_COMMANDS = {
    "sweep": cmd_sweep, "point": cmd_point, "dissipativity": cmd_dissipativity,
    "multitone": cmd_multitone, "loopshape": cmd_loopshape, "lti-oracle": cmd_lti_oracle,
}


def build_parser():
    p = argparse.ArgumentParser(prog="nlfreq",
                                description="Nonlinear frequency-response batch runner.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="worker processes (default: available CPUs)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--varpi", type=float, default=None, help="frequency for 'point'")
    p.add_argument("--a-u", dest="a_u", type=float, default=None, help="amplitude for 'point'")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("", "--workers must be at least 1")
        cfg = load_config(args.config)
        args.raw_config = cfg.raw
        return _COMMANDS[args.command](args, cfg, started)
    except ConfigError as exc:
        where = f" at {exc.path}" if exc.path else ""
        print(f"nlfreq: config error{where}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
