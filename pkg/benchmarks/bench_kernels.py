"""Time the compiled and pure-Python kernel backends on identical inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each backend
and the speedup.  Outputs are compared before timing so a fast but wrong
backend cannot pass unnoticed.
"""

import argparse
import timeit

import numpy as np

from invcrb.kernels import available_backends


def cases():
    rng = np.random.default_rng(0)
    th = np.arccos(rng.uniform(-1, 1, 2000))
    ph = rng.uniform(0, 2 * np.pi, 2000)
    K = 20000
    pth = np.arccos(rng.uniform(-1, 1, (1, K)))
    pph = rng.uniform(0, 2 * np.pi, (1, K))
    bt = rng.normal(size=(1, K)) + 1j * rng.normal(size=(1, K))
    bp = rng.normal(size=(1, K)) + 1j * rng.normal(size=(1, K))
    return {
        "jn_scaled(lmax=80, 200 x)": (
            lambda m: [m.jn_scaled(80, x) for x in np.linspace(0.1, 60, 200)]
        ),
        "hn_scaled(lmax=80, 200 x)": (
            lambda m: [m.hn_scaled(80, x) for x in np.linspace(0.1, 60, 200)]
        ),
        "legendre_table(lmax=40, 2000 angles)": (
            lambda m: m.legendre_table(40, np.cos(th), np.sin(th))
        ),
        "project_plane_waves(lmax=5, K=20000)": (
            lambda m: m.project_plane_waves(5, pth, pph, bt, bp)
        ),
    }


def _same(a, b):
    if isinstance(a, (list, tuple)):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-11, atol=1e-12)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the python backend only")
    print(f"{'kernel':40s} " + " ".join(f"{name:>12s}" for name in backends) + "   speedup")
    for label, fn in cases().items():
        outs = {name: fn(mod) for name, mod in backends.items()}
        if "cython" in outs and not _same(outs["python"], outs["cython"]):
            raise SystemExit(f"{label}: backends disagree")
        times = {
            name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            for name, mod in backends.items()
        }
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else "       -"
        print(f"{label:40s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times.values()) + "  " + speed)


if __name__ == "__main__":
    main()
