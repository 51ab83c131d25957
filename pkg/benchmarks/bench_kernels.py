"""Time the compiled and pure-Python simulation kernels on the same workload.

Usage: python3 benchmarks/bench_kernels.py [--paths 20000] [--repeat 3]

Both backends consume the same Philox streams, so the outputs are also
compared for bit-identity.
"""

import argparse
import time

import numpy as np

from gbdp import _pykernels
from gbdp.model import ModelSpec

try:
    from gbdp import _ckernels
except ImportError:
    _ckernels = None

WORKLOADS = {
    "observe linear k=(2,2)": (ModelSpec.linear((1.0, 0.5), (0.5, 0.25)), "observe"),
    "observe constant": (ModelSpec.constant((1.0, 0.5), (0.5, 0.25)), "observe"),
    "observe parking K=10": (ModelSpec.parking((0.2,), (0.3,), 10), "observe"),
    "hitting LBDP (0.5, 1)": (ModelSpec.linear((0.5,), (1.0,)), "hitting"),
}


def run(mod, spec, kind, M):
    p = spec.kernel_params()
    if kind == "observe":
        out, _ = mod.observe_batch(p, 1, 1.0, np.array([0.5, 1.0]), 1, 0, M, 10**7)
        return (out,)
    return mod.hitting_batch(p, 1, 0, 1, 0, M, 10**7)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn()
        times.append(time.perf_counter() - t0)
    return min(times), res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'workload':<26}{'python s':>10}{'cython s':>10}{'speedup':>9}  identical")
    for name, (spec, kind) in WORKLOADS.items():
        tp, rp = best_of(lambda: run(_pykernels, spec, kind, args.paths), args.repeat)
        if _ckernels is None:
            print(f"{name:<26}{tp:>10.3f}{'n/a':>10}{'':>9}  extension not built")
            continue
        tc, rc = best_of(lambda: run(_ckernels, spec, kind, args.paths), args.repeat)
        same = all(np.array_equal(a, b) for a, b in zip(rp, rc))
        print(f"{name:<26}{tp:>10.3f}{tc:>10.3f}{tp / tc:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
