"""Check the frozen cost profile against the reference measurements it was fitted to.

Uses the quick saturation probes from probe.py (one overloaded run per point)
rather than full ramps, so a full pass takes about a minute. A JSON file of
cost overrides can be given to try a candidate profile:

    python scripts/calibrate.py [--cost-profile costs.json] [group ...]
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from probe import groups  # noqa: E402

from eovsim.costs import CostProfile  # noqa: E402

# (group, key, low, high); a key may name a derived ratio
TARGETS = [
    ("db", "CouchDB", 362.0, 490.0),
    ("db", "LevelDB/CouchDB", 2.5, 3.5),
    ("endorse", ("LevelDB", "drop2"), 0.16, 0.32),
    ("endorse", ("LevelDB", "drop4"), 0.46, 0.62),
    ("endorse", ("CouchDB", "drop2"), 0.06, 0.22),
    ("endorse", ("CouchDB", "drop4"), 0.33, 0.49),
    ("matmul", (300, 2), 24.0, 36.0),
    ("matmul", (1, "ratio"), 0.0, 0.45),
    ("matmul", (100, "ratio"), 0.42, 0.50),
    ("matmul", (300, "ratio"), 0.48, 0.52),
    ("payload", "1k", 0.90, float("inf")),
    ("payload", "100k", 0.0, 0.15),
    ("payload", "peer/client", 2.0, float("inf")),
    ("payload", "MB/s", 10.0, 20.0),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--cost-profile")
    ap.add_argument("groups", nargs="*")
    args = ap.parse_args(argv)
    costs = CostProfile.load(args.cost_profile) if args.cost_profile else None
    g = groups(costs)
    wanted = args.groups or sorted({t[0] for t in TARGETS})
    misses = 0
    for name in wanted:
        t0 = time.time()
        res = g[name]()
        if name == "db":
            res["LevelDB/CouchDB"] = res["LevelDB"] / res["CouchDB"]
        print(f"== {name} ({time.time() - t0:.1f}s)")
        for group, key, lo, hi in TARGETS:
            if group != name:
                continue
            got = res[key]
            ok = lo <= got <= hi
            misses += not ok
            print(f"   {str(key):<24} {got:9.3f}  in [{lo:g}, {hi:g}]  {'ok' if ok else 'MISS'}")
    print(f"{misses} target(s) missed")
    return 1 if misses else 0


if __name__ == "__main__":
    sys.exit(main())
