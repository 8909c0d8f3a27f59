"""Wall-clock comparison of the compiled and pure-Python kernels.

Usage: python bench/bench_kernels.py [--repeats 3] [--K 4 --M 5 --L 4]
"""
import argparse
import time

import numpy as np

from irsrm import admm, feasibility, kernels
from irsrm.model import effective_channels
from irsrm.scenario import Scenario, draw_instance


def timed(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--M", type=int, default=5)
    ap.add_argument("--L", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = Scenario(K=args.K, M=args.M, L=args.L)
    _, ch = draw_instance(sc, args.seed)
    hb = effective_channels(ch.h, ch.g)
    pm = sc.p_max_array
    params = admm.AdmmParams(delta=0.5 * admm.delta_upper_bound(sc.M, sc.K, sc.N, pm.max()))
    g1 = 0.3 * admm.gamma_upper_bound(hb, sc.sigma2, pm)
    g2 = 0.3 * feasibility_bound(hb, sc.sigma2, pm)

    backends = ["python"]
    try:
        kernels.get_backend("compiled")
        backends.append("compiled")
    except RuntimeError:
        print("compiled kernels not built; timing the Python backend only")
    print(f"K={sc.K} M={sc.M} L={sc.L}  active backend: {kernels.BACKEND}")
    print(f"{'kernel':<16}{'backend':<10}{'seconds':>10}{'iters':>8}{'us/iter':>10}")
    rows = {}
    for be in backends:
        t, r = timed(lambda: admm.admm_inner_solve(g1, hb, sc.sigma2, pm, params, sc.L, backend=be),
                     args.repeats)
        rows[("admm_run", be)] = t
        print(f"{'admm_run':<16}{be:<10}{t:>10.4f}{r.iters:>8}{1e6 * t / r.iters:>10.1f}")
        t, r = timed(lambda: feasibility.soc_feasibility_phase(g2, pm, hb, sc.sigma2, backend=be),
                     args.repeats)
        rows[("phase_run", be)] = t
        print(f"{'phase_run':<16}{be:<10}{t:>10.4f}{r.iterations:>8}"
              f"{1e6 * t / max(r.iterations, 1):>10.1f}")
    if len(backends) == 2:
        for name in ("admm_run", "phase_run"):
            print(f"speedup {name}: {rows[(name, 'python')] / rows[(name, 'compiled')]:.1f}x")


def feasibility_bound(hb, sigma2, pm):
    K = hb.shape[0]
    s = np.abs(hb[np.arange(K), np.arange(K)]).sum(axis=1)
    return float(np.min(pm * s * s / sigma2))


if __name__ == "__main__":
    main()
