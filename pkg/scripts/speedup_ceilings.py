#!/usr/bin/env python3
"""Count scalar multiplies to show each sparse kernel's speedup ceiling.

The counted ratio of dense to sparse multiplies is the best any
implementation of the format could do: 2x for 2:4, M/N for V:N:M.  Wall
times from the pure-Python reference kernels are printed for scale only;
they say nothing about accelerator behavior.
"""

import argparse
import sys
import time

import sfk
from sfk.counters import count_multiplies


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", default="64,128,16", help="m,k,n of the dense baseline")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    m_rows, k, n = (int(t) for t in args.shape.split(","))

    a = sfk.rand_matrix(m_rows, k, seed=0)
    b = sfk.rand_matrix(k, n, seed=1)
    with count_multiplies() as c:
        sfk.gemm(a, b)
    dense_mults = c.total
    dense_t = timed(lambda: sfk.gemm(a, b), args.repeat)
    print(f"dense {m_rows}x{k}x{n}: {dense_mults} multiplies, {dense_t * 1e3:.3f} ms")

    s = sfk.sparsify24(a)
    with count_multiplies() as c:
        sfk.spmm24(s, b)
    t = timed(lambda: sfk.spmm24(s, b), args.repeat)
    print(f"2:4      ratio {dense_mults / c.total:g} (ceiling 2), {t * 1e3:.3f} ms")

    for v, n_, m_ in ((64, 2, 16), (64, 2, 32), (64, 2, 64)):
        p = sfk.VenomParams(v, n_, m_)
        if m_rows % v or k % m_:
            print(f"{v}:{n_}:{m_}  skipped (shape not divisible)")
            continue
        vm = sfk.venom_encode(a, p)
        with count_multiplies() as c:
            sfk.venom_spmm(vm, b)
        t = timed(lambda: sfk.venom_spmm(vm, b), args.repeat)
        print(f"{v}:{n_}:{m_:<3} ratio {dense_mults / c.total:g} "
              f"(ceiling {m_ // n_}), {t * 1e3:.3f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
