"""Compare the compiled and pure-Python partition engines.

    python benchmarks/bench_kernel.py [--repeat N]

Times a sequential run and a deterministic parallel run of each bundled
model with both backends, checks that they agree, and prints moves/second.
"""

import argparse
import time
from importlib import resources

from gpsswarp.kernel import ENGINES, run_sequential
from gpsswarp.model import parse_text
from gpsswarp.parallel import ParallelConfig, run_parallel

MODELS = ("model_a.gps", "model_b.gps", "loop.gps")


def load(name):
    return parse_text(resources.files("gpsswarp.models").joinpath(name).read_text())


def best_of(repeat, fn):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(repeat):
    rows = []
    for name in MODELS:
        model = load(name)
        outcomes = {}
        for backend in sorted(ENGINES):
            secs, seq = best_of(repeat, lambda: run_sequential(model, 0, backend=backend))
            moves = seq.meta["moves"]
            rows.append((name, "sequential", backend, secs, moves))
            psecs, par = best_of(repeat, lambda: run_parallel(model, ParallelConfig(seed=0, backend=backend)))
            pmoves = sum(s.executed for s in par.report.lp_stats)
            rows.append((name, "parallel", backend, psecs, pmoves))
            outcomes[backend] = (seq.outcome(), par.report.outcome())
        if len({o for o in outcomes.values()}) != 1:
            raise SystemExit(f"{name}: backends disagree")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rows = bench(args.repeat)
    print(f"{'model':<12} {'engine':<11} {'backend':<8} {'seconds':>8} {'moves':>9} {'moves/s':>11} {'speedup':>8}")
    base = {(m, e): s for m, e, b, s, _ in rows if b == "python"}
    for m, e, b, s, n in rows:
        print(f"{m:<12} {e:<11} {b:<8} {s:8.3f} {n:9d} {n / s:11.0f} {base[(m, e)] / s:7.1f}x")


if __name__ == "__main__":
    main()
