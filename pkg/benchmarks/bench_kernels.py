"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each case runs on identical inputs under both backends, checks that the
outputs agree, and reports the best wall time of ``--repeat`` runs.
"""
import argparse
import time

import numpy as np

from beliefhjb import build_grid, make_spec
from beliefhjb.kernels import available, load
from beliefhjb.simulator import simulate_episodes
from beliefhjb.solver import Scheme, constant_policy


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def case_iterate(backend):
    spec = make_spec(0.0, 2.0, 1.0, b=3.0)
    sch = Scheme(spec, build_grid(1, 201), backend)

    def run():
        V = sch.g.copy()
        it, sup = sch.kern.iterate(V, sch.g, sch.coef, sch.inv_h2, sch.c, sch.shape, sch.tau,
                                   1e-8, 10**7)
        return V, it
    return run


def case_iterate_2d(backend):
    spec = make_spec([0.0, 0.5], [2.0, 2.5], 1.0, sigma=[1.0, 1.5])
    sch = Scheme(spec, build_grid(2, 51), backend)

    def run():
        V = sch.g.copy()
        it, sup = sch.kern.iterate(V, sch.g, sch.coef, sch.inv_h2, sch.c, sch.shape, sch.tau,
                                   1e-6, 10**7)
        return V, it
    return run


def case_pairs(backend):
    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.random((2000, 1)))
    ue, ve = rng.normal(size=2000), rng.normal(size=2000)
    kern = load(backend)
    return lambda: kern.argmax_pairs(ue, ve, X, X, 100.0, 0, 2000)


def case_paths(backend):
    spec = make_spec(0.0, 2.0, 1.0, b=3.0)
    pol = constant_policy(1, 1)
    return lambda: simulate_episodes(spec, pol, [0.5], 2000, 1e-3, 2.0, seed=0,
                                     backend=backend)["x"]


CASES = [
    ("iterate d=1 n=201 (9327 sweeps)", case_iterate),
    ("iterate d=2 n=51x51 (660 sweeps)", case_iterate_2d),
    ("argmax_pairs 2000x2000", case_pairs),
    ("advance_paths 2000 paths x 2000 steps", case_paths),
]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-12, atol=0)
    return a == b


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available()
    if "cython" not in backends:
        print("compiled core not built; only the fallback is available")
    print(f"{'case':<42}" + "".join(f"{b:>12}" for b in backends) + "     speedup  agree")
    for name, make in CASES:
        times, outs = [], []
        for b in backends:
            t, out = best_of(make(b), args.repeat)
            times.append(t)
            outs.append(out)
        speed = f"{times[-1] / times[0]:10.1f}x" if len(times) == 2 else ""
        agree = same(outs[0], outs[-1])
        print(f"{name:<42}" + "".join(f"{t:11.4f}s" for t in times) + f"  {speed}  {agree}")


if __name__ == "__main__":
    main()
