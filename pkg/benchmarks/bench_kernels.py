"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs under both backends; the table lists
the best wall time of ``--repeat`` runs, the speedup and the largest
absolute difference between the two results.
"""
import argparse
import sys
import timeit

import numpy as np

from extrabi import kernels


def cases(rng):
    x = np.linspace(-40, 40, 4001)
    coeffs = (rng.normal(size=(400, 4)) + 1j * rng.normal(size=(400, 4))) / 40
    F = (rng.normal(size=(40, 3)) + 1j * rng.normal(size=(40, 3))) / 10
    rho = np.ascontiguousarray(F @ F.conj().T)
    axis = np.linspace(-8, 8, 121)
    prob = rng.random(2000)
    prob /= prob.sum()
    energies = np.sort(rng.normal(size=2000)) * 50
    times = np.linspace(0, 1e3, 20001)
    return {
        "hermite_table(n=800, 4001 pts)": ("hermite_table", (800, x)),
        "hermite_series(400x4, 4001 pts)": ("hermite_series", (coeffs, x)),
        "wigner_fock(n=40, 121x121)": ("wigner_fock", (rho, axis, axis)),
        "survival_amplitude(2000 lvls, 20001 t)": ("survival_amplitude", (prob, energies, times)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels are not built; only the numpy fallback is available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for label, (name, inputs) in cases(rng).items():
        fc = getattr(kernels.compiled, name)
        fp = getattr(kernels.python, name)
        tc = min(timeit.repeat(lambda: fc(*inputs), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fp(*inputs), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(np.asarray(fc(*inputs)) - np.asarray(fp(*inputs)))))
        print(f"{label:42s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {diff:10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
