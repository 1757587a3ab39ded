"""Command-line interface.

    python -m eovsim run    [--network F] [--bench F] [--rate R] [--crash ROLE@T]
    python -m eovsim ramp   [--network F] [--bench F]
    python -m eovsim sweep  SCENARIO [--set section.key=value ...]
    python -m eovsim list-scenarios
    python -m eovsim validate CONFIG

Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 ramp never
passed its start rate.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .bench import CrashPlan, network_runner, ramp_search, run_benchmark
from .config import (BenchConfig, ConfigError, NetworkConfig, _load_json, bench_from_dict,
                     network_from_dict, parse_configs, to_dict)
from .costs import CostProfile, UnsupportedQuery
from .export import config_hash, export_ramp, export_run, write_json
from .scenarios import SCENARIOS, describe, get_scenario, run_scenario
from .topology import DelayMatrix

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_BELOW_START = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--cost-profile", help="JSON file overriding cost profile fields")
    p.add_argument("--delay-matrix", help="JSON file with labels and one-way ms matrix")
    p.add_argument("--trace", action="store_true", help="also dump the event trace")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eovsim", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in (("run", "single benchmark run"), ("ramp", "ramping series")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--network", help="network config file")
        p.add_argument("--bench", help="benchmark config file")
        if name == "run":
            p.add_argument("--rate", type=float, help="request rate (default: frequency_bound)")
            p.add_argument("--crash", help="crash a node: ROLE@T, ROLE in leader|follower|peer|client|<id>")
        _common(p)

    p = sub.add_parser("sweep", help="run a built-in scenario")
    p.add_argument("scenario")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a base setting, e.g. bench.duration=10 or rate=200")
    _common(p)

    sub.add_parser("list-scenarios", help="show the built-in scenarios")

    p = sub.add_parser("validate", help="check a network and/or benchmark config file")
    p.add_argument("config")
    return ap


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_extras(args):
    costs = CostProfile.load(args.cost_profile) if args.cost_profile else None
    matrix = DelayMatrix.load(args.delay_matrix) if args.delay_matrix else None
    return costs, matrix


def _parse_crash(text):
    if not text:
        return None
    role, sep, t = text.partition("@")
    if not sep:
        raise ConfigError("expected ROLE@T", "--crash")
    try:
        return CrashPlan(role, float(t))
    except ValueError:
        raise ConfigError(f"bad crash time {t!r}", "--crash") from None


def cmd_run(args) -> int:
    net, bench = parse_configs(args.network, args.bench)
    costs, matrix = _load_extras(args)
    crash = _parse_crash(args.crash)
    rate = args.rate if args.rate is not None else bench.frequency_bound
    if rate <= 0:
        raise ConfigError("rate must be > 0", "--rate")
    run = run_benchmark(net, bench, rate, args.seed, costs, matrix, crash, keep_log=args.trace)
    out = Path(args.out)
    export_run(run, out, "run", with_events=args.trace)
    r = run.result
    print(f"rate {rate:g} tx/s: throughput {r.throughput:.2f} tx/s, latency {r.latency_mean:.3f} s, "
          f"effectivity {r.effectivity:.3f}, {'pass' if r.success else 'fail'}")
    print(f"wrote {out}/")
    return EXIT_OK


def cmd_ramp(args) -> int:
    net, bench = parse_configs(args.network, args.bench)
    costs, matrix = _load_extras(args)
    res = ramp_search(network_runner(net, bench, costs, matrix), bench, args.seed)
    out = Path(args.out)
    export_ramp(res, out, {"config_hash": config_hash(to_dict(net), to_dict(bench)),
                           "seed": args.seed, "version": __version__})
    if args.trace and res.history:
        final = run_benchmark(net, bench, res.max_rate or res.history[-1].target_rate,
                              args.seed, costs, matrix, keep_log=True)
        final.network.sim.log.dump(out / "events.csv")
    print(f"max sustainable throughput {res.max_sustainable_throughput:.2f} tx/s "
          f"(rate {res.max_rate:g}, {len(res.history)} runs, {res.termination})")
    print(f"wrote {out}/")
    return EXIT_BELOW_START if res.termination == "below_start_rate" else EXIT_OK


def cmd_sweep(args) -> int:
    scenario = get_scenario(args.scenario)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("expected KEY=VALUE", f"--set {item}")
        overrides[key.strip()] = _parse_value(value.strip())
    if overrides:
        scenario = scenario.with_overrides(overrides)
    costs, matrix = _load_extras(args)
    if args.trace:
        print("note: --trace is ignored for sweeps; use run --trace on a single point",
              file=sys.stderr)
    rs = run_scenario(scenario, args.seed, args.out, costs, matrix)
    failed = sum(1 for r in rs.rows if r.get("kind") == "error")
    print(f"wrote {args.out}/ ({len(rs.rows)} rows, {failed} failed)")
    return EXIT_RUNTIME if failed == len(rs.rows) else EXIT_OK


def cmd_list(args) -> int:
    for s in SCENARIOS.values():
        print(describe(s))
    return EXIT_OK


def cmd_validate(args) -> int:
    data = _load_json(args.config)
    net_keys = {f.name for f in dataclasses.fields(NetworkConfig)}
    bench_keys = {f.name for f in dataclasses.fields(BenchConfig)}
    if set(data) <= {"network", "bench"} and data:
        net = network_from_dict(data.get("network", {}))
        bench = bench_from_dict(data.get("bench", {}))
        print(f"ok: network {config_hash(to_dict(net))}, bench {config_hash(to_dict(bench))}")
    elif set(data) <= net_keys:
        net = network_from_dict(data)
        print(f"ok: network config {config_hash(to_dict(net))} ({net.policy}, {net.orderer_type})")
    elif set(data) <= bench_keys:
        bench = bench_from_dict(data)
        print(f"ok: benchmark config {config_hash(to_dict(bench))} ({bench.method}, {bench.mode})")
    else:
        unknown = sorted(set(data) - net_keys - bench_keys)
        if unknown:
            raise ConfigError("unknown key", unknown[0])
        raise ConfigError("mixes network and benchmark keys; nest them under "
                          "'network' and 'bench'", args.config)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "ramp": cmd_ramp, "sweep": cmd_sweep,
            "list-scenarios": cmd_list, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnsupportedQuery) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:        # noqa: BLE001 - any crash maps to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
