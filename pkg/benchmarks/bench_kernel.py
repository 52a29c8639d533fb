"""Wall-clock comparison of the compiled and pure-Python simulation loops.

    python3 benchmarks/bench_kernel.py --horizon 2 --repeat 3
"""

import argparse
import time

import numpy as np

from etcsim import config, kernel
from etcsim.simulator import simulate


def bench(name: str, backend: str, horizon: float, repeat: int):
    sc, _ = config.load_scenario(name, [f"scenario.horizon={horizon}",
                                        f"scenario.backend={backend}"])
    times, res = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = simulate(sc)
        times.append(time.perf_counter() - t0)
    return min(times), res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=2.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scenarios", nargs="+", default=["paper_sec4", "scalar_demo"])
    args = ap.parse_args(argv)
    if not kernel.HAVE_NATIVE:
        print("compiled kernel not built; only the Python loop is available")
    print(f"{'scenario':<22}{'backend':<9}{'steps':>9}{'events':>8}{'best [s]':>11}"
          f"{'steps/s':>12}")
    for name in args.scenarios:
        rows = {}
        for be in ("native", "python") if kernel.HAVE_NATIVE else ("python",):
            dt, res = bench(name, be, args.horizon, args.repeat)
            rows[be] = (dt, res)
            steps = res.diagnostics["steps"] + res.n_events
            print(f"{name:<22}{be:<9}{steps:>9}{res.n_events:>8}{dt:>11.4f}{steps / dt:>12.3g}")
        if len(rows) == 2:
            (tn, rn), (tp, rp) = rows["native"], rows["python"]
            dev = float(np.max(np.abs(rn.x - rp.x)))
            print(f"{'':<22}speed-up {tp / tn:.1f}x, max state difference {dev:.2g}")


if __name__ == "__main__":
    main()
