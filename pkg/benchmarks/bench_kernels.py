"""Benchmark the compiled path kernel against the numpy fallback.

Runs the same block simulation under both backends (in subprocesses, since
the backend is chosen at import) and reports throughput.  Outputs are
bit-identical across backends; this only measures speed.

Usage: python benchmarks/bench_kernels.py [n_paths]
"""

import json
import os
import subprocess
import sys

WORKLOAD = """
import json, sys, time
import numpy as np
from renlab import backend
from renlab.model import RateModel, JumpModel, BinnedJumpModel, WaitingLaw
from renlab.simulate import _run_paths

n = int(sys.argv[1])
m2 = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0])
jm = JumpModel(("y", "z"), [0.4, 0.6],
               (WaitingLaw.exponential(1.0), WaitingLaw.gamma(2.0, 1.5)))
bjm = BinnedJumpModel(jm, tuple(np.arange(0.0, 8.5, 0.5)), 8.0)

def summarize(occ, n_t, logw):
    return float(occ.sum()), int(n_t.sum())

out = {"backend": backend.BACKEND}
for name, model, t in (("finite t=50", m2, 50.0), ("finite t=400", m2, 400.0),
                        ("jump t=25", bjm, 25.0)):
    _run_paths(model, t, 2000, 1, summarize)  # warm-up
    t0 = time.perf_counter()
    parts = _run_paths(model, t, n, 12345, summarize)
    dt = time.perf_counter() - t0
    visits = sum(p[1] for p in parts)
    out[name] = {"seconds": dt, "paths_per_s": n / dt, "visits": visits,
                 "checksum": sum(p[0] for p in parts)}
print(json.dumps(out))
"""


def run(backend_env: str, n: int) -> dict:
    env = dict(os.environ)
    if backend_env:
        env["RENLAB_BACKEND"] = backend_env
    else:
        env.pop("RENLAB_BACKEND", None)
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, str(n)],
                          capture_output=True, text=True, env=env)
    if proc.returncode != 0:
        raise SystemExit(proc.stderr)
    return json.loads(proc.stdout)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    fast = run("", n)
    slow = run("python", n)
    if fast["backend"] == slow["backend"]:
        print(f"only the {fast['backend']} backend is available; no comparison")
        return
    print(f"{n} paths per workload")
    print(f"{'workload':<14} {'cython s':>10} {'numpy s':>10} {'speedup':>9}")
    for key in ("finite t=50", "finite t=400", "jump t=25"):
        a, b = fast[key], slow[key]
        assert a["checksum"] == b["checksum"], "backends disagree"
        assert a["visits"] == b["visits"]
        print(f"{key:<14} {a['seconds']:>10.3f} {b['seconds']:>10.3f} "
              f"{b['seconds'] / a['seconds']:>8.2f}x")


if __name__ == "__main__":
    main()
