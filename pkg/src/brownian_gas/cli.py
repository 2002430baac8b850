"""Command-line entry point.

Every subcommand reads an optional JSON config, merges it over built-in
defaults (printable with ``--print-defaults``), validates it, runs, and
writes its results plus ``manifest.json`` into ``--out``.

Exit codes: 0 success, 1 acceptance-suite failure, 2 config error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from . import __version__, analytic, gas, io, stats, verify
from .analytic import ReservoirParams, SeriesControl
from .configuration import Configuration
from .flow import flow_decomposition
from .paths import RngStream, TimeGrid
from .sticky_limit import build_initial_array, simulate_replicas

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# stream ids of the subcommands; verify uses 1..9
STREAMS = {
    "stationary-sample": 11,
    "transition-sample": 12,
    "dual-transition-sample": 13,
    "simulate-window": 14,
    "flow": 15,
    "sticky-limit": 16,
}

_RES = {"lambda0": 2.0, "lambda1": 1.0}
DEFAULTS = {
    "stationary-sample": {**_RES, "replicas": 10_000},
    "transition-sample": {**_RES, "t": 0.5, "step": 1e-3, "replicas": 10_000, "initial": [],
                          "abs_tol": 1e-12},
    "dual-transition-sample": {**_RES, "t": 0.5, "step": 1e-3, "replicas": 10_000, "initial": [],
                               "abs_tol": 1e-12},
    "simulate-window": {**_RES, "a": 0.2, "horizon": 1.0, "dt": 1e-4, "t_burn": 10.0, "stride": 1},
    "flow": {**_RES, "a": 0.2, "x": 0.5, "horizon": 20.0, "dt": 1e-5, "t_burn": 10.0,
             "epsilons": [0.04, 0.02, 0.01], "replicas": 200},
    "sticky-limit": {**_RES, "n": 200, "t": 1.0, "replicas": 2000, "initial": [], "a_n": None,
                     "bins": [0.0, 0.25, 0.5, 0.75, 1.0]},
    "analytic-table": {**_RES, "x": [0.1, 0.25, 0.5, 0.75, 0.9], "t": [0.01, 0.1, 0.5, 1.0],
                       "abs_tol": 1e-12},
    "verify": {"criteria": [c.name for c in verify.CRITERIA], "overrides": {}, "determinism": True},
}


class ConfigError(ValueError):
    """A config field is missing, unknown or out of range."""


# -- validation -------------------------------------------------------------

def _num(cfg, key, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, integer=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    bad_lo = v <= lo if lo_open else v < lo
    bad_hi = v >= hi if hi_open else v > hi
    if bad_lo or bad_hi:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ConfigError(f"{key}: must lie in {lb}{lo:g}, {hi:g}{rb}, got {v!r}")


def _positions(cfg, key):
    v = cfg[key]
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{key}: expected a list of numbers")
    if any(not 0 < x < 1 for x in v):
        raise ConfigError(f"{key}: positions must lie in (0, 1)")


def validate(command: str, cfg: dict) -> None:
    allowed = set(DEFAULTS[command]) | {"seed"}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field for {command}")
    if "seed" in cfg:
        _num(cfg, "seed", 0, 2 ** 63 - 1, integer=True)
    if "lambda0" in cfg:
        _num(cfg, "lambda0", 0)
        _num(cfg, "lambda1", 0)
    for key in ("replicas", "n", "stride"):
        if key in cfg:
            _num(cfg, key, 1, integer=True)
    for key in ("t", "horizon"):
        if key in cfg and not isinstance(cfg[key], list):
            _num(cfg, key, 0, lo_open=(command != "transition-sample" and command != "dual-transition-sample"))
    for key in ("step", "dt", "abs_tol"):
        if key in cfg:
            _num(cfg, key, 0, lo_open=True)
    if "t_burn" in cfg:
        _num(cfg, "t_burn", 0)
    if "a" in cfg:
        _num(cfg, "a", 0, 0.5, lo_open=True, hi_open=True)
    if "initial" in cfg:
        _positions(cfg, "initial")
    if command == "flow":
        _num(cfg, "x", 0, 1, lo_open=True, hi_open=True)
        eps = cfg["epsilons"]
        if not isinstance(eps, list) or not eps:
            raise ConfigError("epsilons: expected a nonempty list")
        for e in eps:
            if isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0:
                raise ConfigError(f"epsilons: entries must be > 0, got {e!r}")
            if not (cfg["a"] <= cfg["x"] - e and cfg["x"] + e <= 1 - cfg["a"]):
                raise ConfigError(f"epsilons: band around x={cfg['x']} with epsilon={e} leaves [a, 1-a]")
            if cfg["dt"] > e * e / 10:
                raise ConfigError(f"dt: must be <= epsilon^2/10 = {e * e / 10:g} for epsilon={e}")
    if command == "sticky-limit":
        if not (cfg["lambda0"] > 0 and cfg["lambda1"] > 0):
            raise ConfigError("lambda0: both lambda0 and lambda1 must be > 0 for the sticky system")
        _num(cfg, "t", 0, lo_open=True)
        if cfg["a_n"] is not None:
            _num(cfg, "a_n", 0, 0.5, lo_open=True, hi_open=True)
        b = cfg["bins"]
        if (not isinstance(b, list) or len(b) < 2 or b[0] != 0 or b[-1] != 1
                or any(y <= x for x, y in zip(b, b[1:]))):
            raise ConfigError("bins: expected increasing edges from 0 to 1")
    if command == "analytic-table":
        for key in ("x", "t"):
            v = cfg[key] if isinstance(cfg[key], list) else [cfg[key]]
            if not v:
                raise ConfigError(f"{key}: expected a nonempty list")
        if any(not 0 < x < 1 for x in np.atleast_1d(cfg["x"])):
            raise ConfigError("x: values must lie in (0, 1)")
        if any(not t >= 0 for t in np.atleast_1d(cfg["t"])):
            raise ConfigError("t: values must be >= 0")
    if command == "verify":
        crit = cfg["criteria"]
        if not isinstance(crit, list) or any(c not in verify.BY_NAME for c in crit):
            raise ConfigError(f"criteria: expected a list drawn from {sorted(verify.BY_NAME)}")
        if not isinstance(cfg["overrides"], dict) or any(k not in verify.BY_NAME for k in cfg["overrides"]):
            raise ConfigError("overrides: expected a mapping from criterion name to parameters")


def load_config(command: str, path, seed) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(user, dict):
            raise ConfigError("config: top level must be a JSON object")
        cfg.update(user)
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    validate(command, cfg)
    return cfg


# -- subcommands ---------------------------------------------------------------

def _params(cfg) -> ReservoirParams:
    return ReservoirParams(float(cfg["lambda0"]), float(cfg["lambda1"]))


def _stream(cfg, command) -> RngStream:
    return RngStream(int(cfg["seed"]), STREAMS[command])


def _configs_out(out, configs, label) -> dict:
    rows = ((r, float(x)) for r, c in enumerate(configs) for x in c.positions)
    io.write_csv(os.path.join(out, "configurations.csv"), ["replica", "position"], rows)
    counts = np.array([len(c) for c in configs])
    hist = np.bincount(counts) if counts.size else np.zeros(1, dtype=int)
    summary = {"sampler": label, "replicas": int(counts.size), "mean_count": float(counts.mean()),
               "count_histogram": hist.tolist()}
    io.write_json(os.path.join(out, "summary.json"), summary)
    return {"files": ["configurations.csv", "summary.json"], "summary": summary}


def cmd_stationary(cfg, out, jobs):
    draws = gas.sample_stationary_batch(_stream(cfg, "stationary-sample"), _params(cfg), int(cfg["replicas"]))
    res = _configs_out(out, draws, "stationary")
    res["summary"]["expected_mean_count"] = _params(cfg).total / 2
    io.write_json(os.path.join(out, "summary.json"), res["summary"])
    return res


def _kernel_cmd(cfg, out, command, batch):
    p = _params(cfg)
    omega = Configuration(np.array(cfg["initial"], dtype=float))
    ctl = SeriesControl(abs_tol=float(cfg["abs_tol"]))
    draws = batch(_stream(cfg, command), p, [omega] * int(cfg["replicas"]), float(cfg["t"]),
                  float(cfg["step"]), ctl)
    return _configs_out(out, draws, command)


def cmd_transition(cfg, out, jobs):
    return _kernel_cmd(cfg, out, "transition-sample", gas.sample_transition_batch)


def cmd_dual(cfg, out, jobs):
    return _kernel_cmd(cfg, out, "dual-transition-sample", gas.sample_dual_transition_batch)


def cmd_window(cfg, out, jobs):
    grid = TimeGrid.over(float(cfg["horizon"]), float(cfg["dt"]))
    sim = gas.simulate_window(_stream(cfg, "simulate-window"), _params(cfg), float(cfg["a"]), grid,
                              float(cfg["t_burn"]))
    sim.to_csv(os.path.join(out, "window.csv"), stride=int(cfg["stride"]))
    summary = {"trajectories": len(sim), "births_at_a": int(np.sum(sim.entry == 0)),
               "births_at_1_minus_a": int(np.sum(sim.entry == 1)),
               "marks": {"0": int(np.sum(sim.marks == 0)), "1": int(np.sum(sim.marks == 1)),
                         "unmarked": int(np.sum(sim.marks < 0))},
               "count_in_window_at_end": len(sim.configuration(grid.t_end))}
    io.write_json(os.path.join(out, "summary.json"), summary)
    return {"files": ["window.csv", "summary.json"], "summary": summary}


def _flow_one(args):
    cfg, r = args
    grid = TimeGrid.over(float(cfg["horizon"]), float(cfg["dt"]))
    sim = gas.simulate_window(_stream(cfg, "flow").child(r), _params(cfg), float(cfg["a"]), grid,
                              float(cfg["t_burn"]))
    dec = flow_decomposition(sim, float(cfg["x"]), [float(e) for e in cfg["epsilons"]], strict=False)
    tr = dec.flow.trace
    T = float(cfg["horizon"])
    return {"replica": r, "epsilon": dec.flow.epsilon, "stabilized": dec.flow.stabilized,
            "J": int(tr.value(T)), "N01": int(dec.n01(T)), "N10": int(dec.n10(T)),
            "R": int(dec.residual(T)), "n01_times": dec.n01_times.tolist(),
            "n10_times": dec.n10_times.tolist(),
            "jumps": list(zip(tr.jump_times.tolist(), np.cumsum(tr.jump_signs).tolist()))}


def _map(fn: Callable, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def cmd_flow(cfg, out, jobs):
    res = _map(_flow_one, [(cfg, r) for r in range(int(cfg["replicas"]))], jobs)
    rows = []
    for d in res:
        rows.append((d["replica"], 0.0, 0))
        rows.extend((d["replica"], float(t), int(j)) for t, j in d["jumps"])
    io.write_csv(os.path.join(out, "traces.csv"), ["replica", "t", "J"], rows)
    decomp = [{k: v for k, v in d.items() if k != "jumps"} for d in res]
    io.write_json(os.path.join(out, "decomposition.json"), {"x": cfg["x"], "horizon": cfg["horizon"],
                                                            "replicas": decomp})
    J = np.array([d["J"] for d in res], dtype=float)
    T = float(cfg["horizon"])
    summary = {"mean_J_over_T": float(J.mean() / T),
               "var_J_over_T": float(J.var(ddof=1) / T) if J.size > 1 else 0.0,
               "expected_mean": (cfg["lambda0"] - cfg["lambda1"]) / 2,
               "expected_var": (cfg["lambda0"] + cfg["lambda1"]) / 2,
               "unstabilized": int(sum(not d["stabilized"] for d in res))}
    io.write_json(os.path.join(out, "summary.json"), summary)
    return {"files": ["traces.csv", "decomposition.json", "summary.json"], "summary": summary}


def cmd_sticky(cfg, out, jobs):
    p = _params(cfg)
    omega = Configuration(np.array(cfg["initial"], dtype=float))
    arr = build_initial_array(omega, int(cfg["n"]), cfg["a_n"])
    rc = simulate_replicas(_stream(cfg, "sticky-limit"), p, arr, float(cfg["t"]), int(cfg["replicas"]),
                           bins=cfg["bins"])
    rc.to_csv(os.path.join(out, "replicas.csv"))
    mu = analytic.total_entrance_mass(p, float(cfg["t"])) if not len(omega) else None
    summary = {"n": arr.n, "interior_start": int(arr.interior.size), "n_at_zero": arr.n_at_zero,
               "n_at_one": arr.n_at_one, "mean_interior_count": float(rc.totals.mean()),
               "bin_means": rc.counts.mean(axis=0).tolist(),
               "fraction_at_zero": float(rc.at_zero.mean() / arr.n)}
    if mu is not None and rc.totals.size >= 10:
        summary["poisson_limit_mean"] = mu
        try:
            summary["poisson_gof"] = stats.poisson_gof(rc.totals, mu).to_dict()
        except Exception as exc:  # too few cells for a test is not an error here
            summary["poisson_gof"] = str(exc)
    io.write_json(os.path.join(out, "summary.json"), summary)
    return {"files": ["replicas.csv", "summary.json"], "summary": summary}


def cmd_analytic(cfg, out, jobs):
    p = _params(cfg)
    ctl = SeriesControl(abs_tol=float(cfg["abs_tol"]))
    xs = np.atleast_1d(np.asarray(cfg["x"], dtype=float))
    ts = np.atleast_1d(np.asarray(cfg["t"], dtype=float))
    rows = []
    for t in ts:
        for x in xs:
            h0 = float(analytic.hitting_prob(0, x, t, ctl))
            h1 = float(analytic.hitting_prob(1, x, t, ctl))
            rows.append((float(t), float(x), float(analytic.bar_lambda(p, x)), h0, h1,
                         float(analytic.entrance_intensity(p, x, t, ctl))))
    io.write_csv(os.path.join(out, "table.csv"),
                 ["t", "x", "bar_lambda", "hit0", "hit1", "entrance_intensity"], rows)
    masses = {"t": ts.tolist(), "total_entrance_mass": [analytic.total_entrance_mass(p, t, ctl) for t in ts]}
    io.write_json(os.path.join(out, "summary.json"), masses)
    return {"files": ["table.csv", "summary.json"], "summary": masses}


def cmd_verify(cfg, out, jobs, level):
    def progress(name, res, s):
        print(f"{name}: {'pass' if res['pass'] else 'FAIL'} ({s:.1f} s)", file=sys.stderr)

    rep = verify.verify_suite(int(cfg["seed"]), level, jobs, cfg["criteria"], cfg["overrides"],
                              bool(cfg["determinism"]), progress)
    io.write_json(os.path.join(out, "report.json"), rep.to_dict())
    with open(os.path.join(out, "report_body.json"), "w") as fh:
        fh.write(rep.body_text())
    return {"files": ["report.json", "report_body.json"], "passed": rep.passed,
            "summary": {k: v["pass"] for k, v in rep.body["criteria"].items()}}


COMMANDS = {
    "stationary-sample": cmd_stationary,
    "transition-sample": cmd_transition,
    "dual-transition-sample": cmd_dual,
    "simulate-window": cmd_window,
    "flow": cmd_flow,
    "sticky-limit": cmd_sticky,
    "analytic-table": cmd_analytic,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brownian-gas", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="JSON config merged over the defaults")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", metavar="DIR", default=None, help="output directory")
        sp.add_argument("--level", type=float, default=stats.DEFAULT_LEVEL, help="test level")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.print_defaults:
        sys.stdout.write(io.dumps({**DEFAULTS[args.command], "seed": 0}))
        return EXIT_OK
    try:
        if not 0 < args.level < 1:
            raise ConfigError(f"level: must lie in (0, 1), got {args.level!r}")
        if args.jobs < 1:
            raise ConfigError(f"jobs: must be >= 1, got {args.jobs!r}")
        cfg = load_config(args.command, args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or f"results-{args.command}"
    try:
        os.makedirs(out, exist_ok=True)
        fn = COMMANDS[args.command]
        res = fn(cfg, out, args.jobs, args.level) if args.command == "verify" else fn(cfg, out, args.jobs)
        manifest = {"command": args.command, "version": __version__, "seed": cfg["seed"],
                    "level": args.level, "config": cfg, "files": res["files"]}
        io.write_json(os.path.join(out, "manifest.json"), manifest)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(io.dumps(res["summary"]), end="")
    if args.command == "verify" and not res["passed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
