"""Time the hot kernels under the numba and numpy backends.

Each backend runs in its own subprocess because the choice is fixed at
import time (``CSLWALK_DISABLE_NUMBA``).  Compilation is excluded by a warm-up
call.  Usage: ``python3 benchmarks/bench_kernels.py [--repeat 3]``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, time
from cslwalk._accel import BACKEND
from cslwalk.params import ExperimentSetup, make_csl_params
from cslwalk.montecarlo import sample_trials, simulate_experiments
from cslwalk.oracle import quadrature_propagate

setup = ExperimentSetup()
p = make_csl_params(1e-4, 1e4, 1e9)
repeat = {repeat}

def best(f):
    f()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter(); f(); ts.append(time.perf_counter() - t0)
    return min(ts)

out = {{"backend": BACKEND}}
out["sample_1e6_trials"] = best(lambda: sample_trials(setup, p, 1, 1_000_000))
out["experiments_20x24201"] = best(lambda: simulate_experiments(setup, p, 1, 24201, 20))
out["quadrature_point_20_nodes"] = best(lambda: quadrature_propagate(setup, p, 0.0, 2 * setup.mu, nodes=20))
print(json.dumps(out))
"""


def run(backend_off: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("CSLWALK_DISABLE_NUMBA", None)
    if backend_off:
        env["CSLWALK_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    print(f"{'kernel':<28}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<28}{fast[key]:>11.4f}s{slow[key]:>11.4f}s{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
