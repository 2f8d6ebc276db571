"""Event-loop throughput of the compiled and pure-Python kernels.

    python benchmarks/bench_kmc.py [--level 4] [--horizon 0.2] [--repeat 3]

Both backends consume the same random stream, so the final configurations
must agree exactly; the script checks that before reporting timings.
"""

import argparse
import time

import numpy as np

from gasket_zrp import build_gasket
from gasket_zrp.analysis import make_probes
from gasket_zrp.kernels import available_backends
from gasket_zrp.rng import replica_rng
from gasket_zrp.spectrum import eigendecompose
from gasket_zrp.zrp import linear_rate, run, sample_equilibrium, solve_fugacity


def one_run(graph, profile, probes, horizon, backend):
    rng = replica_rng(7, 0)
    cfg = sample_equilibrium(profile, graph, rng)
    t0 = time.perf_counter()
    (smp,) = run(cfg, profile.model, horizon, [horizon], probes=probes, rng=rng, backend=backend)
    return time.perf_counter() - t0, cfg, smp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=4)
    ap.add_argument("--rho", type=float, default=1.0)
    ap.add_argument("--horizon", type=float, default=0.2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    graph = build_gasket(args.level)
    basis = eigendecompose(graph)
    profile = solve_fugacity(linear_rate(), args.rho)
    probes = make_probes(graph, profile, {"v1": basis.mode(1), "v2": basis.mode(2)}, bg={"v1": basis.mode(1)})

    results = {}
    for backend in available_backends():
        best = min(one_run(graph, profile, probes, args.horizon, backend) for _ in range(args.repeat))
        results[backend] = best
    ref = next(iter(results.values()))
    for name, (secs, cfg, smp) in results.items():
        same = np.array_equal(cfg.eta, ref[1].eta) and np.array_equal(smp.fields, ref[2].fields)
        rate = cfg.events / secs
        print(f"{name:>8}: {cfg.events:9d} events in {secs:7.3f}s  {rate / 1e6:6.2f} M events/s  identical={same}")
    if "cython" in results and "python" in results:
        print(f"speed-up: {results['python'][0] / results['cython'][0]:.1f}x")


if __name__ == "__main__":
    main()
