"""Run built-in sweeps one after another, each into its own directory.

    python scripts/run_scenarios.py [--seed N] [--out results] [--quick] [name ...]

With no names every scenario runs (this takes a while on one core). ``--quick``
shortens the runs to 10 s (crash sweeps keep their length), which is enough to see the trends.
"""
import argparse
import sys
import time
from pathlib import Path

from eovsim.scenarios import SCENARIOS, describe, run_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("names", nargs="*")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args(argv)

    names = args.names or list(SCENARIOS)
    unknown = [n for n in names if n not in SCENARIOS]
    if unknown:
        ap.error(f"unknown scenario(s): {', '.join(unknown)}")
    for name in names:
        sc = SCENARIOS[name]
        if args.quick and sc.crash is None:
            sc = sc.with_overrides({"bench.duration": 10})
        print(describe(sc))
        t0 = time.time()
        run_scenario(sc, args.seed, Path(args.out) / name)
        print(f"   done in {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
