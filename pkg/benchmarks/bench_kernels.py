"""Compare the compiled covariance kernels against the numpy fallback.

Times the two hot kernels on synthetic inputs of increasing size, checks
that both backends agree numerically, then times an end-to-end greedy
solve under each backend in a subprocess (the backend is fixed at import
time, so in-process swapping is not possible).

Run:  python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from pmuplace._kernels import numpy_backend

try:
    from pmuplace._kernels import _core
except ImportError:
    _core = None


def hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T) / n + np.eye(n)


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_quadforms():
    rng = np.random.default_rng(0)
    print("quadforms (q_j, s_j for all candidate rows)")
    print("  %-18s %12s %12s %8s" % ("size", "numpy", "cython", "speedup"))
    for n, m in ((20, 200), (60, 600), (120, 1200)):
        sigma = hermitian(rng, n)
        rows = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        loops = max(1, 2_000_000 // (m * n))
        t_np = best_of(lambda: [numpy_backend.quadforms(sigma, rows) for _ in range(loops)]) / loops
        if _core is None:
            print("  n=%-4d m=%-6d %12.1fus %12s" % (n, m, t_np * 1e6, "n/a"))
            continue
        q0, s0 = numpy_backend.quadforms(sigma, rows)
        q1, s1 = _core.quadforms(sigma, rows)
        assert np.allclose(q0, q1, rtol=1e-12) and np.allclose(s0, s1, rtol=1e-12)
        t_cy = best_of(lambda: [_core.quadforms(sigma, rows) for _ in range(loops)]) / loops
        print("  n=%-4d m=%-6d %10.1f us %10.1f us %7.2fx"
              % (n, m, t_np * 1e6, t_cy * 1e6, t_np / t_cy))


def bench_downdate():
    rng = np.random.default_rng(1)
    print("rank_one_downdate (sequential greedy-style sweep)")
    print("  %-18s %12s %12s %8s" % ("size", "numpy", "cython", "speedup"))
    for n, updates in ((20, 2000), (60, 1000), (120, 500)):
        sigma = hermitian(rng, n)
        rows = rng.standard_normal((updates, n)) + 1j * rng.standard_normal((updates, n))

        def sweep(impl):
            s = sigma.copy()
            for i in range(updates):
                impl.rank_one_downdate(s, rows[i], 0.5)
            return s

        t_np = best_of(lambda: sweep(numpy_backend)) / updates
        if _core is None:
            print("  n=%-4d x%-6d %12.1fus %12s" % (n, updates, t_np * 1e6, "n/a"))
            continue
        assert np.allclose(sweep(numpy_backend), sweep(_core), atol=1e-10)
        t_cy = best_of(lambda: sweep(_core)) / updates
        print("  n=%-4d x%-6d %10.1f us %10.1f us %7.2fx"
              % (n, updates, t_np * 1e6, t_cy * 1e6, t_np / t_cy))


SOLVE_SNIPPET = """
import time
import pmuplace as pp
from pmuplace._kernels import BACKEND

case = pp.feeder_instance(n_buses=40, seed=5, three_phase=True)
inst = case.instance.with_constraint(pp.Cardinality(12))
t0 = time.perf_counter()
for _ in range(5):
    res = pp.greedy_cardinality(inst)
print("%s %.4f %.6f" % (BACKEND, (time.perf_counter() - t0) / 5, res.value))
"""


def bench_solve():
    print("greedy placement, 40-bus three-phase feeder, 12 sensors")
    values = {}
    for backend in ("numpy", "cython"):
        if backend == "cython" and _core is None:
            print("  cython: extension not built")
            continue
        env = dict(os.environ, PMUPLACE_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, "-c", SOLVE_SNIPPET], env=env,
            capture_output=True, text=True, check=True,
        ).stdout.split()
        values[out[0]] = (float(out[1]), float(out[2]))
        print("  %-7s %8.1f ms/solve   value %.6f" % (out[0], float(out[1]) * 1e3, float(out[2])))
    if len(values) == 2:
        assert values["numpy"][1] == values["cython"][1], "backends disagree"
        print("  identical solutions, %.2fx speedup"
              % (values["numpy"][0] / values["cython"][0]))


if __name__ == "__main__":
    bench_quadforms()
    print()
    bench_downdate()
    print()
    bench_solve()
