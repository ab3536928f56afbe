"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time from ``SURVCONTRAST_DISABLE_NUMBA``. Timings exclude the first call so
that JIT compilation is not counted.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from survcontrast import kernels, backend, run_test, SimSetting, TestConfig, simulate_dataset

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
n, m = 1000, 60
exp_eta = rng.exponential(size=(n, n // 10))
dlam = rng.uniform(0, 0.05, m)
ev = np.arange(1.0, m + 1)
cases = {
    "survival_products 1000x100, 60 jumps": lambda: kernels.survival_products(exp_eta, dlam),
    "martingale_terms n=1000": lambda: kernels.martingale_terms(
        exp_eta[:, 0], exp_eta[:, 1], np.ceil(rng.uniform(0, 60, n)), rng.integers(0, 2, n),
        25.0, ev, dlam, ev, dlam, 1e-3),
    "batch_box_tv 500x20": lambda: kernels.batch_box_tv(rng.normal(size=(500, 20)), 4.0),
    "batch_monotone 500x20": lambda: kernels.batch_monotone(rng.normal(size=(500, 20)),
                                                            np.full(20, 0.05)),
}
data = simulate_dataset(SimSetting("C", 500), np.random.default_rng(1))
cases["run_test boxtv n=500 U=500"] = lambda: run_test(
    data, TestConfig(class_kind="boxtv", num_null_draws=500))

out = {"backend": backend(), "timings": {}}
for name, fn in cases.items():
    fn()  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out["timings"][name] = best
print(json.dumps(out))
"""


def run_backend(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("SURVCONTRAST_DISABLE_NUMBA", None)
    if disable:
        env["SURVCONTRAST_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    width = max(len(k) for k in fast["timings"])
    print(f"{'kernel':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speed-up")
    for name, t_fast in fast["timings"].items():
        t_slow = slow["timings"][name]
        print(f"{name:<{width}}  {t_fast * 1e3:8.2f}ms  {t_slow * 1e3:8.2f}ms  {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
