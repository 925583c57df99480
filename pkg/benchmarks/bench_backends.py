"""Compiled vs pure-Python kernels: per-call timings and one full planning call.

    python benchmarks/bench_backends.py [--repeat 20]
"""

import argparse
import time

import numpy as np

from pcpomdp import kernels
from pcpomdp.belief import ParticleBelief
from pcpomdp.constraints import ConstraintSpec
from pcpomdp.planners import PCSS, PlannerConfig, plan
from pcpomdp.simulation import scenario_by_name


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    logw = rng.normal(size=(100, 150))
    u = rng.random(100)
    z = rng.normal(size=(100, 4))
    means = rng.normal(size=(150, 2, 2))
    var = rng.uniform(0.1, 1.0, size=(150, 2))
    a = rng.normal(size=(100, 150))
    logb = rng.normal(size=150)
    scen = scenario_by_name("map1")
    b = ParticleBelief.from_gaussian(np.zeros(2), 0.01 * np.eye(2), 150, rng)
    cfg = PlannerConfig(PCSS, 2, 5, ConstraintSpec(0.8))
    return {
        "normalize_rows 100x150": lambda: kernels.normalize_rows(logw),
        "systematic_indices 100x150": lambda: kernels.systematic_indices(logw, u),
        "logsumexp_rows 100x150": lambda: kernels.logsumexp_rows(a, logb),
        "block_gauss_loglik 100x150": lambda: kernels.block_gauss_loglik(z, means, var),
        "plan pcss L=2 m_d=5 m_x=150": lambda: plan(b, cfg, scen, rng=0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the python backend only")
    table = {}
    for name in backends:
        old = kernels.use_backend(name)
        try:
            for label, fn in cases(np.random.default_rng(0)).items():
                fn()  # warm up
                table.setdefault(label, {})[name] = best_of(fn, args.repeat)
        finally:
            kernels.use_backend(old)
    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     ratio" if len(backends) == 2 else ""))
    for label, row in table.items():
        line = f"{label:32s}" + "".join(f"{row[b] * 1e3:12.3f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{row['python'] / row['compiled']:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
