"""Compare the compiled and pure-Python slot loops.

    python benchmarks/bench_kernel.py [--slots 200000] [--repeat 3]

Both backends run the same specs on the same random inputs; the script
checks the accumulators agree and prints nanoseconds per slot.
"""

import argparse
import time

import numpy as np

from heavytraffic import _kernel_py, estimation, kernel
from heavytraffic.control import CapacityFace, ServiceSet
from heavytraffic.distributions import DistFamily, bernoulli
from heavytraffic.estimation import EstimatorConfig
from heavytraffic.system import SystemTemplate

try:
    from heavytraffic import _kernel
except ImportError:
    _kernel = None

CASES = {
    "single": SystemTemplate("single_server", 1, "single", DistFamily("bernoulli"), service=(bernoulli(0.5),)),
    "jsq": SystemTemplate("load_balance", 2, "jsq", DistFamily("binomial", 2), service=(bernoulli(0.5),) * 2),
    "maxweight": SystemTemplate("schedule", 2, "maxweight", DistFamily("bernoulli"),
                                service_set=ServiceSet(((1, 0), (0, 1), (0, 0))),
                                face=CapacityFace((1, 1), 1, (0.5, 0.5))),
}


def timed(run_chunk, spec, cfg, repeat):
    kernel.run_chunk = run_chunk
    best, acc = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        acc = estimation.simulate(spec, cfg)
        best = min(best, time.perf_counter() - t)
    return best, acc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--epsilon", type=float, default=0.05)
    args = ap.parse_args()
    if _kernel is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    cfg = EstimatorConfig(horizon=args.slots, seed=0)
    print(f"{'case':<10} {'python ns/slot':>15} {'cython ns/slot':>15} {'speedup':>8}  agree")
    original = kernel.run_chunk
    try:
        for name, template in CASES.items():
            spec = template.at(args.epsilon)
            t_py, a_py = timed(_kernel_py.run_chunk, spec, cfg, args.repeat)
            t_cy, a_cy = timed(_kernel.run_chunk, spec, cfg, args.repeat)
            agree = np.allclose(a_py.sums, a_cy.sums, rtol=1e-12, atol=0) and np.array_equal(a_py.hist, a_cy.hist)
            print(f"{name:<10} {1e9 * t_py / args.slots:15.1f} {1e9 * t_cy / args.slots:15.1f} "
                  f"{t_py / t_cy:8.1f}  {agree}")
    finally:
        kernel.run_chunk = original


if __name__ == "__main__":
    main()
