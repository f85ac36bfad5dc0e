"""Time the numpy and numba kernel backends on default-sized problems.

    python3 benchmarks/bench_kernels.py [--m 16 32 64] [--repeat 200]

Also times one full default solve with each backend (the backend is fixed
at import, so each solve runs in a subprocess with BDRIS_ISAC_NUMBA set).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bdris_isac import kernels
from bdris_isac.manifold import _Problem
from bdris_isac.scattering import ScatteringMatrix
from bdris_isac.scenario import SystemConfig, generate_channels

SOLVE_SNIPPET = """
import time
from bdris_isac import kernels, solve_joint, generate_channels, SystemConfig
cfg = SystemConfig(seed=0)
ch = generate_channels(cfg)
solve_joint(ch, cfg)  # warm-up (JIT compile or cache load)
t = time.perf_counter()
for s in range(1, 6):
    c = cfg.replace(seed=s)
    solve_joint(generate_channels(c), c)
print(kernels.active.name, (time.perf_counter() - t) / 5)
"""


def kernel_args(m):
    cfg = SystemConfig(m_elements=m, n_groups=4)
    ch = generate_channels(cfg)
    prob = _Problem(ch, cfg)
    rng = np.random.default_rng(0)
    phi = ScatteringMatrix.random(m, 4, rng).full()
    w = rng.standard_normal((cfg.n_tx, cfg.n_ue)) + 1j * rng.standard_normal((cfg.n_tx, cfg.n_ue))
    rate = (phi, prob.g_tx, prob.d_bu, prob.r_ue, prob.d_tu, prob.r_tar, w, cfg.p_tar, prob.sigma2_ue)
    sense = (phi, prob.g_rx, prob.r_tar, prob.r_tar_dot)
    return {"rate": rate, "rate_gradient": rate, "sensing": sense, "xi_gradient": sense}


def bench_kernels(sizes, repeat):
    print(f"{'M':>4} {'kernel':<14} " + " ".join(f"{name + ' us':>10}" for name in kernels.BACKENDS)
          + f" {'speedup':>8}")
    for m in sizes:
        args = kernel_args(m)
        for kname, a in args.items():
            times = {}
            for bname, backend in kernels.BACKENDS.items():
                fn = getattr(backend, kname)
                fn(*a)
                times[bname] = min(timeit.repeat(lambda: fn(*a), number=repeat, repeat=3)) / repeat
            line = f"{m:>4} {kname:<14} " + " ".join(f"{t * 1e6:10.2f}" for t in times.values())
            if "numba" in times:
                line += f" {times['numpy'] / times['numba']:8.2f}"
            print(line)


def bench_solves():
    for flag in ("0", "1"):
        env = dict(os.environ, BDRIS_ISAC_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"default solve, {out[0]:<5} backend: {float(out[1]):.3f} s per solve")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--m", type=int, nargs="+", default=[16, 32, 64])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--skip-solve", action="store_true")
    args = parser.parse_args()
    bench_kernels(args.m, args.repeat)
    if not args.skip_solve:
        bench_solves()


if __name__ == "__main__":
    main()
