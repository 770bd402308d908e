"""Compare the compiled and numpy kernels on the solver's hot loops.

    python benchmarks/bench_kernels.py [--n 256 512] [--repeat 5]

Both backends are imported directly, so the comparison does not depend on
``TNL_PURE_PYTHON``.  Results are also checked for bitwise agreement.
"""
import argparse
import time

import numpy as np

from tnl import _pykernels

try:
    from tnl import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _velocity(n, rng):
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    # smooth divergence-free field in samples per unit time
    vx = np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y) * n
    vy = -np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y) * n
    return np.stack([vx, vy]) * (1 + 0.01 * rng.standard_normal((2, n, n)))


def run(sizes, repeat, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        vel = _velocity(n, rng)
        dt = 0.5 / n
        img = rng.random((n, n))
        px = rng.uniform(-2, n + 2, (n, n))
        py = rng.uniform(-2, n + 2, (n, n))
        cases = {
            "rk4_feet": lambda k: k.rk4_feet(vel, vel, vel, dt, True),
            "bilinear": lambda k: k.bilinear(img, px, py, True),
            "bilinear_zero": lambda k: k.bilinear(img, px, py, False),
        }
        for name, call in cases.items():
            tp, op = _best(lambda: call(_pykernels), repeat)
            if _ckernels is None:
                rows.append((name, n, tp, float("nan"), None))
                continue
            tc, oc = _best(lambda: call(_ckernels), repeat)
            same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in
                       zip(op if isinstance(op, tuple) else (op,), oc if isinstance(oc, tuple) else (oc,)))
            rows.append((name, n, tp, tc, same))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':<14}{'n':>6}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}  identical")
    for name, n, tp, tc, same in run(args.n, args.repeat):
        print(f"{name:<14}{n:>6}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>10.1f}  {same}")


if __name__ == "__main__":
    main()
