"""Time the hot kernels with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because the switch is read at
import time:

    python benchmarks/bench_kernels.py --repeats 3
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from drsn import USE_NUMBA
from drsn.limit import simulate_w
from drsn.mle import fit_field
from drsn.model import make_grid
from drsn.scenarios import ScenarioSpec, generate

repeats = int(sys.argv[1])
spec = ScenarioSpec("scen1", 1000, 1.0)
g1, _ = generate(spec, 1)
cases = {
    "fit_field n=1000 20x61": lambda: fit_field(g1, make_grid((-1.0, 5.0, 61), 0.1, 20), spec.fit_link),
    "fit_field n=1000 50x201": lambda: fit_field(g1, make_grid((-1.0, 5.0, 201), 0.1, 50), spec.fit_link),
    "simulate_w 20000x1000": lambda: simulate_w(0.1, 20000, 1000, seed=1),
}
out = {"numba": USE_NUMBA}
for name, fn in cases.items():
    fn()  # warm-up (jit compile or cache load)
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(disable: bool, repeats: int) -> dict:
    env = dict(os.environ, DRSN_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args()

    t0 = time.perf_counter()
    nb = run_backend(False, args.repeats)
    np_ = run_backend(True, args.repeats)
    names = [k for k in nb if k != "numba"]
    width = max(map(len, names))
    print(f"{'case':<{width}}  {'numba s':>9}  {'numpy s':>9}  {'speedup':>8}")
    for k in names:
        print(f"{k:<{width}}  {nb[k]:9.3f}  {np_[k]:9.3f}  {np_[k] / nb[k]:7.1f}x")
    if not nb["numba"]:
        print("note: numba unavailable, both columns used the numpy path")
    print(f"total wall time {time.perf_counter() - t0:.1f}s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": nb, "numpy": np_}, fh, indent=2)


if __name__ == "__main__":
    main()
