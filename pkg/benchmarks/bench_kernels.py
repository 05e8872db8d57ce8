"""Compiled vs numpy kernels on free-Laplacian workloads.

    python3 benchmarks/bench_kernels.py [--size 1024] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from intermittency_lab import kernels
from intermittency_lab.evolve import eigendecompose, site_state, spectral_measure
from intermittency_lab.observables import log_time_grid
from intermittency_lab.operators import build_free_laplacian


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    es = eigendecompose(build_free_laplacian(args.size))
    xi = site_state(es.sites, 0)
    g = np.ascontiguousarray(es.coefficients(xi))
    lam = np.ascontiguousarray(es.eigenvalues)
    w = np.abs(g) ** 2
    times = log_time_grid(1.0, 0.4 * args.size, 32)
    mu = spectral_measure(es, xi)

    cases = {
        "return_probability": (lambda k: k.phase_average_quadform(lam, w, times)),
        "lipschitz_sweep": (lambda k: k.lipschitz_sweep(mu.locations, mu.weights, 1e-3, 1.0)),
    }
    print(f"dim={es.dim} times={times.size} backend={kernels.BACKEND}")
    if kernels.compiled is None:
        print("compiled kernels unavailable; timing the fallback only")
    for name, fn in cases.items():
        tp, rp = _best(lambda: fn(kernels.python), args.repeat)
        line = f"{name:20s} python {tp:8.3f}s"
        if kernels.compiled is not None:
            tc, rc = _best(lambda: fn(kernels.compiled), args.repeat)
            diff = float(np.max(np.abs(np.asarray(rp[0] if isinstance(rp, tuple) else rp)
                                       - np.asarray(rc[0] if isinstance(rc, tuple) else rc))))
            line += f"  cython {tc:8.3f}s  speedup {tp / tc:6.1f}x  max|diff| {diff:.2e}"
        print(line)


if __name__ == "__main__":
    main()
