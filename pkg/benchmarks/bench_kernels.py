"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py --grid 64 --repeat 5
"""

import argparse
import time

import numpy as np

from solitonlab import _kernels
from solitonlab.transport import arc_cost, bump


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=int, default=64, help="cells M for both kernels")
    parser.add_argument("--heat-steps", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    M = args.grid
    cost = arc_cost(M, 1.0)
    a = bump(M, 1.0, 0.3).weights
    b = bump(M, 4.0, 0.5).weights
    w = bump(M, 2.0, 0.2).weights
    mu = np.full(args.heat_steps, 0.5)

    backends = _kernels.backends()
    print(f"grid M={M}, heat steps={args.heat_steps}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, call in (
        ("transport_simplex", lambda mod: mod.transport_simplex(cost, a, b)),
        ("heat_cn_periodic", lambda mod: mod.heat_cn_periodic(w, mu)),
    ):
        timings = {name: best_of(lambda mod=mod: call(mod), args.repeat) for name, mod in backends.items()}
        line = f"{label:<20}" + "".join(f"{t * 1e3:>12.2f}ms" for t in timings.values())
        if "compiled" in timings:
            line += f"{timings['python'] / timings['compiled']:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
