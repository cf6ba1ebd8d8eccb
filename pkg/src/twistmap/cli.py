"""Command-line front end.

    twistmap simulate CONFIG [CONFIG ...] [--out DIR]   (writes DIR/<config name>/)
    twistmap validate CONFIG [--out DIR]
    twistmap match-lens CONFIG [--min T] [--max T] [--out DIR]
    twistmap preset NAME --out DIR [--config-only]

Exit status: 0 success, 1 validation failure, 2 config error. Several configs
given to ``simulate`` run in parallel; the worker count is read from the
environment variable ``TWISTMAP_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError, TwistmapError
from .observables import write_csv
from .scenario import PRESETS, load_scenario, match_lens, preset, run_scenario, validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
WORKERS_ENV = "TWISTMAP_WORKERS"


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(WORKERS_ENV, f"expected a positive integer, got {n}")
    return n


def _simulate_one(args):
    path, outdir = args
    scenario = load_scenario(path)
    result = run_scenario(scenario, outdir)
    return str(result.outdir), result.files


def cmd_simulate(ns):
    configs = [Path(c) for c in ns.configs]
    # validate every config up front so a typo fails before any work starts
    scenarios = [load_scenario(c) for c in configs]
    root = Path(ns.out)
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("simulate", "config file names must be distinct; each one names its run directory")
    jobs = [(str(c), str(root / s.name)) for c, s in zip(configs, scenarios)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]
    for outdir, files in results:
        print(f"{outdir}: {', '.join(files)}")
    return EXIT_OK


def cmd_validate(ns):
    scenario = load_scenario(ns.config)
    report = validate(scenario)
    sys.stdout.write(report.to_text())
    if ns.out:
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "report.csv")
        (out / "config.ini").write_text(scenario.to_ini(), newline="\n")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_match_lens(ns):
    scenario = load_scenario(ns.config)
    lo = ns.min if ns.min is not None else 0.1 / scenario.omega0
    hi = ns.max if ns.max is not None else lo + 2 * math.pi / scenario.omega0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = match_lens(scenario, (lo, hi))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    sys.stdout.write(result.to_text())
    if ns.out:
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "match.txt").write_text(result.to_text(), newline="\n")
        write_csv(out / "match_scan.csv", ["drift", "excess"], result.scan)
        (out / "config.ini").write_text(scenario.to_ini(), newline="\n")
    return EXIT_OK


def cmd_preset(ns):
    scenario = preset(ns.name)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / f"{ns.name}.ini"
    cfg.write_text(scenario.to_ini(), newline="\n")
    print(f"wrote {cfg}")
    if not ns.config_only:
        result = run_scenario(scenario, out)
        print(f"{result.outdir}: {', '.join(result.files)}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="twistmap", description="Evolve twisted Landau states through time-dependent fields.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run scenarios and write CSV series")
    s.add_argument("configs", nargs="+")
    s.add_argument("--out", default="runs", help="parent directory; each config writes to <out>/<config name>")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run the verification suites on a scenario")
    v.add_argument("config")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("match-lens", help="optimize the drift before the second lens")
    m.add_argument("config")
    m.add_argument("--min", type=float, default=None, help="shortest drift (default 0.1/omega0)")
    m.add_argument("--max", type=float, default=None, help="longest drift (default min + 2 pi/omega0)")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_match_lens)

    r = sub.add_parser("preset", help="write a built-in scenario and run it")
    r.add_argument("name", choices=PRESETS)
    r.add_argument("--out", required=True)
    r.add_argument("--config-only", action="store_true")
    r.set_defaults(func=cmd_preset)
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TwistmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
