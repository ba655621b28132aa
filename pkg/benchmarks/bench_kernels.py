#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Runs each kernel on fit-shaped workloads (observation counts and ranks
matching a 93-home year and a 30-home synthetic run) and prints the
per-call time for both backends plus an end-to-end fit comparison.

Usage: python benchmarks/bench_kernels.py [--repeats N]
The numpy-only path of the installed package itself is selected at
import time with ACTSENSE_DISABLE_NUMBA=1; this script always imports
both implementations directly, so no env flag is needed here.
"""

import argparse
import time

import numpy as np

from actsense import _kernels
from actsense import ModelConfig, SyntheticConfig, generate_synthetic
from actsense.als_engine import fit
from actsense.tensor_core import ObservationSet


def timeit(fn, repeats):
    fn()  # warm (JIT compile / cache touch)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    cases = [("30-home month", 2520, 30, 2), ("93-home year", 7812, 93, 4)]
    rows = []
    for label, n_obs, n_rows, r in cases:
        vecs = rng.random((n_obs, r))
        weights = rng.random(n_obs)
        idx = rng.integers(0, n_rows, size=n_obs).astype(np.int64)
        mats = rng.normal(size=(n_obs, r, r))
        mats = np.einsum("nij,nkj->nik", mats, mats) + np.eye(r)
        H = rng.random((n_rows, r))
        ii = idx
        jj = rng.integers(0, 7, size=n_obs).astype(np.int64)
        kk = rng.integers(0, 12, size=n_obs).astype(np.int64)
        A, S = rng.random((7, r)), rng.random((12, r))

        pairs = [
            ("accumulate_outer",
             lambda: _kernels.accumulate_outer_numpy(vecs, weights, idx, n_rows, 1.0),
             None if _kernels.accumulate_outer_numba is None else
             lambda: _kernels.accumulate_outer_numba(vecs, weights, idx, n_rows, 1.0)),
            ("predict_cells",
             lambda: _kernels.predict_cells_numpy(H, A, S, ii, jj, kk),
             None if _kernels.predict_cells_numba is None else
             lambda: _kernels.predict_cells_numba(H, A, S, ii, jj, kk)),
            ("quadform_batch",
             lambda: _kernels.quadform_batch_numpy(mats, vecs),
             None if _kernels.quadform_batch_numba is None else
             lambda: _kernels.quadform_batch_numba(mats, vecs)),
        ]
        for name, np_fn, nb_fn in pairs:
            t_np = timeit(np_fn, repeats)
            t_nb = timeit(nb_fn, repeats) if nb_fn is not None else float("nan")
            rows.append((label, name, t_np, t_nb))
    return rows


def bench_fit(repeats):
    cfg = SyntheticConfig(num_homes=30, num_appliances=6, num_months=12,
                          true_rank=2, noise_sigma=0.05, seed=1)
    tensor, _ = generate_synthetic(cfg)
    M, N, T = tensor.readings.shape
    omega = ObservationSet.from_triples(
        (i, j, k) for i in range(M) for j in range(N) for k in range(T))
    mc = ModelConfig(rank=2, lambda1=100.0, lambda2=100.0, lambda3=100.0,
                     max_sweeps=50, tol=1e-9, seed=2)
    return timeit(lambda: fit(tensor, omega, mc), max(1, repeats // 20))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"selected backend: {_kernels.BACKEND}")
    print(f"{'case':<16} {'kernel':<18} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, name, t_np, t_nb in bench_kernels(args.repeats):
        speed = t_np / t_nb if t_nb == t_nb and t_nb > 0 else float("nan")
        print(f"{label:<16} {name:<18} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{speed:>8.1f}x")
    t_fit = bench_fit(args.repeats)
    print(f"\nend-to-end 50-sweep fit (selected backend): {t_fit * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
