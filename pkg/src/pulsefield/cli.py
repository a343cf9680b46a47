"""Command line entry point: ``pulsefield <subcommand> --config scenario.json``.

Exit codes: 0 success, 1 configuration error, 2 run error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import meanfield as mf
from . import particles as pt
from . import steady_state as ss
from .errors import ConfigError, PulsefieldError
from .quantile import format_float
from .scenarios import Scenario, load_config, set_dotted, validate_config

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_VERIFY = 0, 1, 2, 3
OUT_ENV = "PULSEFIELD_OUT"


def _round_floats(obj):
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(format_float(x)) if np.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_round_floats(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def output_dir(args, name: str) -> Path:
    root = Path(args.out or os.environ.get(OUT_ENV) or "pulsefield_out")
    path = root / name
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- subcommands ----------------------------------------------------------------

def do_simulate(scenario: Scenario, out: Path) -> dict:
    write_json(out / "manifest.json", {"command": "simulate", "config": scenario.manifest()})
    rec = scenario.run()
    rec.to_csv(out / "trajectory.csv")
    every = scenario.snapshot_every
    if every:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for snap in rec.all_snapshots():
            if snap.step % every == 0:
                mf.write_snapshot_csv(snap_dir / f"step_{snap.step:07d}.csv", snap, scenario.response)
    final = mf.Snapshot(rec.final_state.step_index, rec.final_state.tau, rec.final_state.t,
                        rec.final_state.n_tilde, rec.final_state.profile.q, rec.final_state.profile.z)
    mf.write_snapshot_csv(out / "final_profile.csv", final, scenario.response)
    summary = {
        "outcome": rec.outcome.as_dict(),
        "steps": len(rec.rows) - 1,
        "tau_final": rec.final_state.tau,
        "t_final": rec.final_state.t,
        "left_physical_domain": not all(r.in_domain for r in rec.rows),
    }
    write_json(out / "outcome.json", summary)
    return summary


def do_particles(scenario: Scenario, out: Path) -> dict:
    write_json(out / "manifest.json", {"command": "particles", "config": scenario.manifest()})
    cfg = scenario.particles
    source = scenario.initial_profile(cfg["M"])
    ens = pt.init_from_density(source, cfg["count"], cfg["seed"], stratified=cfg["stratified"])
    ens.phases_to_csv(out / "ensemble_initial.csv")
    final = pt.run_particles(ens, scenario.response, t_end=cfg["t_end"], spike_budget=cfg["spike_budget"])
    final.spikes_to_csv(out / "spikes.csv")
    final.phases_to_csv(out / "ensemble_final.csv")
    summary = {
        "count": final.count,
        "t_final": final.t,
        "events": len(final.spike_log),
        "resets": final.resets,
        "firing_rate": final.firing_rate() if final.t > 0 else None,
        "max_cascade": max((ev.cascade_size for ev in final.spike_log), default=0),
    }
    write_json(out / "summary.json", summary)
    return summary


def do_steady(scenario: Scenario, out: Path) -> dict:
    write_json(out / "manifest.json", {"command": "steady-state", "config": scenario.manifest()})
    ex = ss.exists(scenario.response)
    result = {"exists": ex.exists, "harmonic_integral": ex.harmonic_integral}
    if ex.boundary:
        result["boundary"] = True
    if ex.exists:
        st = ss.solve(scenario.response, scenario.solver.M)
        st.profile.to_csv(out / "profile.csv")
        result["N_star"] = st.n_star
        result["profile_csv"] = "profile.csv"
    write_json(out / "steady_state.json", result)
    return result


COMMANDS = {"simulate": do_simulate, "particles": do_particles, "steady-state": do_steady}


def _sweep_cell(args):
    command, cfg, out = args
    scenario = Scenario.from_config(cfg)
    Path(out).mkdir(parents=True, exist_ok=True)
    return COMMANDS[command](scenario, Path(out))


def do_sweep(raw: dict, out: Path, jobs: int) -> list:
    cfg = validate_config(raw)
    sweep = raw.get("sweep")
    if not sweep:
        raise ConfigError("sweep: missing 'sweep' block with parameter axes")
    command = sweep.get("command", "simulate")
    axes = sweep["axes"]
    names = sorted(axes)
    base = {k: v for k, v in raw.items() if k != "sweep"}
    cells = []
    for idx, values in enumerate(itertools.product(*(axes[n] for n in names))):
        cell = copy.deepcopy(base)
        for n, v in zip(names, values):
            set_dotted(cell, n, v)
        cell["name"] = f"{cfg['name']}_cell{idx:04d}"
        Scenario.from_config(cell)  # fail early on bad cells
        cells.append((command, cell, str(out / f"cell_{idx:04d}"), dict(zip(names, values))))
    write_json(out / "manifest.json", {"command": "sweep", "sweep_command": command, "axes": axes,
                                       "cells": [{"dir": Path(c[2]).name, "values": c[3]} for c in cells],
                                       "config": base})
    work = [c[:3] for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, work))
    else:
        results = [_sweep_cell(w) for w in work]
    return results


def do_verify(suite_name: str, out: Path) -> bool:
    from .suite import run_suite

    reports = run_suite(suite_name)
    payload = [r.as_dict() for r in reports]
    write_json(out / "manifest.json", {"command": "verify", "suite": suite_name})
    write_json(out / "reports.json", payload)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.theorem:<28} {r.scenario}")
    return all(r.passed for r in reports)


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsefield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run the mean-field solver"),
                        ("particles", "run the finite particle system"),
                        ("steady-state", "decide existence and compute the steady state"),
                        ("sweep", "run a command over a cartesian product of parameters")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./pulsefield_out)")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p = sub.add_parser("verify", help="run the verification battery")
    p.add_argument("--suite", default="default")
    p.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./pulsefield_out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            ok = do_verify(args.suite, output_dir(args, f"verify_{args.suite}"))
            return EXIT_OK if ok else EXIT_VERIFY
        raw = load_config(args.config)
        if args.command == "sweep":
            name = validate_config(raw)["name"]
            do_sweep(raw, output_dir(args, name), max(1, args.jobs))
            return EXIT_OK
        scenario = Scenario.from_config({k: v for k, v in raw.items() if k != "sweep"})
        result = COMMANDS[args.command](scenario, output_dir(args, scenario.name))
        print(json.dumps(_round_floats(result), sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PulsefieldError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
