#!/usr/bin/env python3
"""Benchmark the compiled pose-distance kernels against the numpy fallback.

Workloads mirror the training loop's hot paths: the pairwise distance matrix
behind the Chamfer/nearest-label passes, the matched-pair gradient batch
behind view-consistency SGD, and the rotation solves inside quotient means.

Run:  python benchmarks/bench_kernels.py [--repeats 7]
"""

import argparse
import time

import numpy as np

from viewconsist import _kernels_np

try:
    from viewconsist import _kernels as _compiled
except ImportError:
    _compiled = None


def _configs(rng, n, d):
    a = rng.normal(size=(n, 3, d))
    return a - a.mean(axis=2, keepdims=True)


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    d = 10
    latents = _configs(rng, 480, d)   # all target views
    bank = _configs(rng, 200, d)      # source labels
    preds = _configs(rng, 4096, d)
    anchors = _configs(rng, 4096, d)

    workloads = [
        ("pairwise_sqdist 480x200", lambda mod: mod.pairwise_sqdist(latents, bank)),
        ("paired_grad 4096", lambda mod: mod.paired_grad(preds, anchors)),
        ("paired_align 4096", lambda mod: mod.paired_align(preds, anchors)),
        ("paired_sqdist 4096", lambda mod: mod.paired_sqdist(preds, anchors)),
    ]

    backends = [("python", _kernels_np)]
    if _compiled is not None:
        backends.append(("compiled", _compiled))
    else:
        print("compiled backend not built; showing the fallback only\n")

    print(f"{'workload':28s}" + "".join(f"{name:>12s}" for name, _ in backends)
          + ("     speedup" if _compiled is not None else ""))
    for label, fn in workloads:
        times = [_time(lambda m=mod: fn(m), args.repeats) for _, mod in backends]
        row = f"{label:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)

    if _compiled is not None:
        a, b = latents[:64], bank[:64]
        gap = np.abs(
            _kernels_np.pairwise_sqdist(a, b) - _compiled.pairwise_sqdist(a, b)
        ).max()
        print(f"\nmax |python - compiled| on a shared pairwise block: {gap:.2e}")


if __name__ == "__main__":
    main()
