"""Compare the compiled kernels against the pure-Python fallback.

Run: python3 benchmarks/bench_kernels.py [--repeat N]
Also times one full scenario per backend when --scenario is given.
"""
import argparse
import os
import random
import subprocess
import sys
import timeit

from agentnet import _kernels_py as python_backend
from agentnet import kernels


def workloads(mod):
    rng = random.Random(0)
    rows = [tuple(rng.random() for _ in range(5)) for _ in range(40)]
    weights = (0.1, 0.4, 0.2, 0.3)
    shares = [rng.random() for _ in range(24)]

    def score():
        mod.score_candidates(rows, weights)

    def jain():
        mod.jain_index(shares)

    def queue():
        q = mod.LinkQueue(20_000_000, 100)
        t = 0
        for _ in range(2000):
            q.admit(t, 1400)
            t += 300

    return {"score_candidates(40x5)": score, "jain_index(24)": jain, "LinkQueue.admit x2000": queue}


def bench(repeat):
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the fallback is timed")
    backends = [("python", python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    results = {}
    for name, mod in backends:
        for label, fn in workloads(mod).items():
            n = 200 if "Queue" in label else 20_000
            best = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
            results[(label, name)] = best
    print(f"{'kernel':28s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for label in workloads(python_backend):
        py_t = results[(label, "python")] * 1e6
        cy = results.get((label, "cython"))
        if cy is None:
            print(f"{label:28s} {py_t:10.2f} {'-':>10s} {'-':>8s}")
        else:
            print(f"{label:28s} {py_t:10.2f} {cy * 1e6:10.2f} {py_t / (cy * 1e6):7.1f}x")


def scenario(kind):
    code = ("import time; from agentnet.cli import default_config; "
            "from agentnet.experiments import load_config, run_experiment; "
            f"t=time.perf_counter(); run_experiment(load_config(default_config('{kind}'), 1)); "
            "print(round(time.perf_counter()-t, 2))")
    for label, env in (("cython", {}), ("python", {"AGENTNET_PURE_PYTHON": "1"})):
        out = subprocess.run([sys.executable, "-c", code], env={**os.environ, **env},
                             capture_output=True, text=True, check=True)
        print(f"{kind} scenario, {label} kernels: {out.stdout.strip()} s")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scenario", choices=["sfc", "cc", "ra"])
    args = ap.parse_args()
    bench(args.repeat)
    if args.scenario:
        scenario(args.scenario)


if __name__ == "__main__":
    main()
