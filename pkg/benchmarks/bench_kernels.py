"""Time the compiled and numpy kernel backends on the same inputs.

Usage: python benchmarks/bench_kernels.py [--size 32] [--batch 50] [--repeat 20]
"""

import argparse
import timeit

from inv2inv import kernels
from inv2inv.rng import CounterStream


def bench(backend, x, xc, w, uc, repeat):
    cases = {
        "sobel": lambda: backend.sobel(x),
        "sobel_adjoint": lambda: backend.sobel_adjoint(x, x),
        "conv3x3": lambda: backend.conv3x3(xc, w),
        "conv3x3_adjoint": lambda: backend.conv3x3_adjoint(uc, w),
    }
    return {name: min(timeit.repeat(fn, number=1, repeat=repeat)) for name, fn in cases.items()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    st = CounterStream(0, 80)
    n, b = args.size, args.batch
    x = st.normal((b, n, n))
    xc = st.normal((b, 3, n, n))
    w = st.normal((8, 3, 3, 3))
    uc = st.normal((b, 8, n, n))
    results = {name: bench(mod, x, xc, w, uc, args.repeat)
               for name, mod in sorted(kernels.available_backends().items())}
    names = list(results)
    print(f"batch={b} size={n}x{n}, best of {args.repeat}, milliseconds")
    print(f"{'kernel':<18}" + "".join(f"{n_:>12}" for n_ in names)
          + ("     speedup" if len(names) == 2 else ""))
    for case in next(iter(results.values())):
        row = [results[n_][case] * 1e3 for n_ in names]
        line = f"{case:<18}" + "".join(f"{v:>12.3f}" for v in row)
        if len(names) == 2:
            # names sort as cython, numpy
            line += f"{row[1] / row[0]:>11.2f}x"
        print(line)
    print(f"active backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
