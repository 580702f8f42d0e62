"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from rotorecho import _fallback

try:
    from rotorecho import _kernels as compiled
except ImportError:
    compiled = None


def cases(n, rng):
    x, p = rng.random(n), rng.random(n)
    vx, vp = rng.normal(size=n), rng.normal(size=n)
    m = max(n // 20, 10)

    def segments():
        # unwrapped steps shorter than a cell, starts wrapped onto the torus
        steps = rng.normal(scale=0.001, size=(m, 2))
        start = (0.5 + np.cumsum(steps, axis=0) - steps) % 1.0
        return start[:, 0].copy(), start[:, 1].copy(), steps[:, 0].copy(), steps[:, 1].copy()

    ax0, ap0, adx, adp = segments()
    bx0, bp0, bdx, bdp = segments()
    return {
        "iterate_cloud x10": lambda k: k.iterate_cloud(x.copy(), p.copy(), 10.0, 10, False),
        "echo_cloud x10": lambda k: k.echo_cloud(x.copy(), p.copy(), 10.0, 10.001, 10),
        "action_sums x8": lambda k: k.action_sums(x.copy(), p.copy(), 6.0, 8),
        "tangent_log_growth x10": lambda k: k.tangent_log_growth(x.copy(), p.copy(), vx, vp, 10.0, 10),
        f"polyline_crossings {m}x{m}": lambda k: k.polyline_crossings(ax0, ap0, adx, adp, bx0, bp0, bdx, bdp, 256),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    backends = [("python", _fallback)] + ([("cython", compiled)] if compiled else [])
    print(f"n={a.n}, best of {a.repeat}")
    print(f"{'kernel':<28}" + "".join(f"{b:>12}" for b, _ in backends) + ("     speedup" if compiled else ""))
    for name, fn in cases(a.n, np.random.default_rng(0)).items():
        best = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=a.repeat)) for _, mod in backends]
        row = f"{name:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in best)
        if compiled:
            row += f"{best[0] / best[1]:>11.1f}x"
        print(row)
    if compiled is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
