"""Numba against pure numpy for the LMS recurrence.

    python3 benchmarks/bench_kernels.py --modes 4 --taps 100 --n-syms 20000

Both implementations run in-process on the same inputs, so the flag
``SDMEQ_DISABLE_NUMBA`` is not needed here; it only changes which one the
package dispatches to. The first jit call (compilation or cache load) is
timed separately.
"""
import argparse
import statistics
import time

import numpy as np

from sdmeq import _jit, kernels


def make_inputs(rng, n_streams, s, M, n_syms):
    r = (rng.standard_normal((n_syms * s, n_streams))
         + 1j * rng.standard_normal((n_syms * s, n_streams))) / np.sqrt(2 * n_streams * M * s)
    x = (rng.choice([-1.0, 1.0], (n_syms, n_streams))
         + 1j * rng.choice([-1.0, 1.0], (n_syms, n_streams))) / np.sqrt(2)
    mu = np.full(n_syms, 0.5 / (n_streams * M * s))
    return r, x, mu


def timed(fn, repeats):
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--modes", type=int, default=4, help="spatial modes N (2N streams)")
    ap.add_argument("--taps", type=int, default=100)
    ap.add_argument("--s", type=int, default=2)
    ap.add_argument("--n-syms", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    d = 2 * args.modes
    s, M, n = args.s, args.taps, args.n_syms
    r, x, mu = make_inputs(np.random.default_rng(0), d, s, M, n)
    W0 = np.zeros((d, d * M * s), dtype=np.complex128)

    def run(fn):
        W = W0.copy()
        err = np.empty_like(x)
        fn(r, x, W, mu, 0, s, M, M // 2, err, 10.0, 1000)
        return W, err

    print(f"LMS, {d} streams, M={M}, s={s}, {n} symbols, median of {args.repeats}")
    t_np = timed(lambda: run(kernels.lms_numpy), args.repeats)
    print(f"  numpy  {t_np:8.3f} s  ({1e6 * t_np / n:7.2f} us/symbol)")
    if not _jit.HAS_NUMBA:
        print("  numba unavailable or disabled; skipped")
        return 0
    t0 = time.perf_counter()
    run(kernels._lms_jit)
    print(f"  first jit call {time.perf_counter() - t0:.2f} s")
    t_jit = timed(lambda: run(kernels._lms_jit), args.repeats)
    print(f"  numba  {t_jit:8.3f} s  ({1e6 * t_jit / n:7.2f} us/symbol)")
    print(f"  speedup {t_np / t_jit:.1f}x")
    Wa, ea = run(kernels.lms_numpy)
    Wb, eb = run(kernels._lms_jit)
    print(f"  max |error difference| {np.abs(ea - eb).max():.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
