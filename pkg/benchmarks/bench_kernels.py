"""Time the compiled kernels against the pure-Python fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 3]

Both backends consume the same Philox stream, so the outputs are also checked
for bitwise equality.
"""
import argparse
import time

import numpy as np

from glmmcmc import _kernels_py
from glmmcmc.distributions import make_rng

try:
    from glmmcmc import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n):
    rng = np.random.default_rng(0)
    mean = rng.normal(0, 3, n)
    sd = np.ones(n)
    pos = (rng.random(n) < 0.5).astype(np.uint8)
    b = rng.integers(1, 4, n).astype(np.int64)
    c = rng.normal(0, 2, n)
    n_omega = max(1, n // 10)
    return {
        "truncated normal": lambda k: k.truncnorm_onesided(make_rng(1), mean, sd, pos),
        "Polya-Gamma": lambda k: k.polya_gamma(make_rng(2), b, c),
        "omega (ARS)": lambda k: np.array([k.omega_draw(r, 40.0, 3.0, 1.5)
                                           for r in [make_rng(3)] for _ in range(n_omega)]),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'kernel':<18}{'python s':>10}{'cython s':>10}{'speedup':>9}  identical")
    for name, fn in cases(args.n).items():
        tp, xp = best_of(lambda: fn(_kernels_py), args.repeat)
        tc, xc = best_of(lambda: fn(compiled), args.repeat)
        print(f"{name:<18}{tp:>10.4f}{tc:>10.4f}{tp / tc:>8.1f}x  {np.array_equal(xp, xc)}")


if __name__ == "__main__":
    main()
