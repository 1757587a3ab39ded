"""Quick capacity probes: one overloaded run per configuration.

With the committer pipeline prioritised, an overloaded run's response slope
sits at the saturation throughput, which is what a full ramp converges to.
Usage: python scripts/probe.py [group ...]
"""
import sys
import time

from eovsim.bench import run_benchmark
from eovsim.config import BenchConfig, NetworkConfig
from eovsim.costs import CostProfile


def capacity(net=None, bench=None, rate=None, costs=None, duration=10):
    net = net or NetworkConfig()
    bench = bench or BenchConfig()
    bench = BenchConfig(**{**bench.__dict__, "duration": duration})
    # first pass finds the saturation level, second runs just above it
    r = run_benchmark(net, bench, rate, costs=costs).result
    r = run_benchmark(net, bench, 1.3 * r.throughput, costs=costs).result
    return r.throughput


def groups(costs=None):
    N = NetworkConfig
    B = BenchConfig
    out = {}
    out["db"] = lambda: {db: capacity(N(database=db), rate=3000 if db == "LevelDB" else 1000, costs=costs)
                         for db in ("CouchDB", "LevelDB")}

    def endorse():
        res = {}
        for db, rate in (("LevelDB", 3000), ("CouchDB", 1000)):
            for k in (1, 2, 4):
                res[db, k] = capacity(N(database=db, endorsement=f"OutOf({k}, 4)"), rate=rate, costs=costs)
            res[db, "drop2"] = 1 - res[db, 2] / res[db, 1]
            res[db, "drop4"] = 1 - res[db, 4] / res[db, 1]
        return res
    out["endorse"] = endorse

    def matmul():
        res = {}
        for n in (1, 100, 300):
            for k in (2, 4):
                net = N(org_count=8, peer_count=1, endorsement=f"OutOf({k}, 8)", orderer_count=4)
                b = B(method="matrixMultiplication", matrix_size=n)
                res[n, k] = capacity(net, b, rate={1: 3000, 100: 600, 300: 120}[n], costs=costs)
            res[n, "ratio"] = res[n, 4] / res[n, 2]
        return res
    out["matmul"] = matmul

    def payload():
        res = {}
        for size in (10, 1000, 100_000):
            for origin in ("client", "peer"):
                if size == 10 and origin == "peer":
                    continue
                res[size, origin] = capacity(bench=B(payload_bytes=size, data_origin=origin),
                                             rate=1000, costs=costs)
        res["1k"] = res[1000, "client"] / res[10, "client"]
        res["100k"] = res[100_000, "client"] / res[10, "client"]
        res["peer/client"] = res[100_000, "peer"] / res[100_000, "client"]
        res["MB/s"] = res[100_000, "peer"] * 100_000 / 1e6
        return res
    out["payload"] = payload

    def delay():
        res = {}
        for mode in ("public", "private"):
            for db, rate in (("CouchDB", 1000), ("LevelDB", 3000)):
                for pl in ("single-dc", "europe", "intercontinental"):
                    res[mode, db, pl] = capacity(N(database=db, placement=pl), B(mode=mode), rate=rate, costs=costs)
                for pl in ("europe", "intercontinental"):
                    res[mode, db, pl, "drop"] = 1 - res[mode, db, pl] / res[mode, db, "single-dc"]
        return res
    out["delay"] = delay

    def hardware():
        res = {}
        for mode in ("public", "private"):
            for hw in ("m5.large", "m5.xlarge", "m5.2xlarge", "m5.4xlarge"):
                res[mode, hw] = capacity(N(node_type=hw), B(mode=mode), rate=1500, costs=costs)
        return res
    out["hardware"] = hardware
    return out


if __name__ == "__main__":
    g = groups()
    for name in sys.argv[1:] or g:
        t = time.time()
        res = g[name]()
        print(f"== {name} ({time.time() - t:.1f}s)")
        for k, v in res.items():
            print(f"   {k}: {v:.3f}")
