"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--n 1152] [--repeat 5]

The first numba call (JIT compilation or cache load) is excluded from the
timings and reported separately.
"""
import argparse
import time

import numpy as np

from bulkedge import kernels as K
from bulkedge.chern import bloch_hamiltonian
from bulkedge.lattice import FluxSpec


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def cases(n, rng):
    w = np.sort(rng.normal(size=n))
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    L = int(np.sqrt(n))
    cell = (np.arange(L * L) // L // 2) * (L // 2) + (np.arange(L * L) % L) // 2
    Msq = M[: L * L, : L * L]
    flux, grid = FluxSpec(1, 5), 24
    ks = 2 * np.pi * np.arange(grid) / grid
    U = np.empty((grid, grid, flux.q, 2), dtype=complex)
    for a, k1 in enumerate(ks / flux.q):
        for b, k2 in enumerate(ks):
            U[a, b] = np.linalg.eigh(bloch_hamiltonian(flux, k1, k2))[1][:, :2]
    return {
        "filter_matrix(uniform)": (
            lambda: K.filter_matrix_numba(w, 100.0, "uniform"),
            lambda: K.filter_matrix_numpy(w, 100.0, "uniform")),
        "filter_matrix(exponential)": (
            lambda: K.filter_matrix_numba(w, 100.0, "exponential"),
            lambda: K.filter_matrix_numpy(w, 100.0, "exponential")),
        "cell_pair_sq": (
            lambda: K.cell_pair_sq_numba(Msq, cell, cell.max() + 1),
            lambda: K.cell_pair_sq_numpy(Msq, cell, cell.max() + 1)),
        "plaquette_phases": (
            lambda: K.plaquette_phases_numba(U),
            lambda: K.plaquette_phases_numpy(U)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1152)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':28s} {'first(s)':>9s} {'numba(s)':>9s} {'numpy(s)':>9s} "
          f"{'speedup':>8s} {'max|diff|':>10s}")
    for name, (fnb, fnp) in cases(args.n, rng).items():
        t0 = time.perf_counter()
        a = fnb()
        first = time.perf_counter() - t0
        b = fnp()
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        tnb, tnp = best_of(fnb, args.repeat), best_of(fnp, args.repeat)
        print(f"{name:28s} {first:9.3f} {tnb:9.4f} {tnp:9.4f} {tnp / tnb:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
