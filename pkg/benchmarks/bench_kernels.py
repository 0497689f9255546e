"""Compare the numba and numpy variants of the loop kernels.

    python benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

The kernel table times both variants in-process. ``--end-to-end`` also runs
a short L-BFGS solve and an ESS computation in two subprocesses, one with
``HESSAPPROX_DISABLE_NUMBA=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hessapprox import kernels
from hessapprox._accel import HAVE_NUMBA


def _cases(rng):
    n = 20000
    x = np.empty(n)
    x[0] = 0.0
    e = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = 0.9 * x[i - 1] + e[i]
    x -= x.mean()
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]

    field = rng.standard_normal((128, 256))
    cz = rng.integers(0, 128, 64)
    cx = rng.integers(0, 256, 64)

    nodes = np.linspace(5, 250, 8)
    coords = np.arange(256, dtype=float)

    m, dim = 10, 8192
    S = rng.standard_normal((m, dim))
    Y = S + 0.1 * rng.standard_normal((m, dim))
    rho = 1.0 / np.einsum("ij,ij->i", S, Y)
    q = rng.standard_normal(dim)
    _, alpha = kernels.lbfgs_first_loop_numpy(S, Y, rho, q)
    return {
        "geyer_tau": ((acf,), "geyer_tau"),
        "recentered_windows": ((field, cz, cx, 6), "recentered_windows"),
        "hat_weights": ((nodes, coords), "hat_weights"),
        "lbfgs_first_loop": ((S, Y, rho, q), "lbfgs_first_loop"),
        "lbfgs_second_loop": ((S, Y, rho, alpha, q), "lbfgs_second_loop"),
    }


def kernel_table(repeat: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for name, (args, base) in _cases(rng).items():
        f_np = getattr(kernels, base + "_numpy")
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat)) * 1e3
        if HAVE_NUMBA:
            f_nb = getattr(kernels, base)
            f_nb(*args)  # compile
            t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat)) * 1e3
            print(f"{name:22s} {t_np:12.3f} {t_nb:12.3f} {t_np / t_nb:8.2f}")
        else:
            print(f"{name:22s} {t_np:12.3f} {'n/a':>12s} {'':>8s}")


_E2E = r"""
import time, numpy as np
from hessapprox.grid import Grid2D
from hessapprox.quadratic import build_quadratic_problem
from hessapprox.optimize import minimize, LbfgsConfig
from hessapprox.mcmc import ess
from hessapprox._accel import backend
g = Grid2D(64, 32)
prob = build_quadratic_problem(g)
minimize(prob, prob.prior.apply_covariance, LbfgsConfig(max_iters=5))
t = time.perf_counter()
_, rec = minimize(prob, prob.prior.apply_covariance, LbfgsConfig(max_iters=3000))
t_opt = time.perf_counter() - t
x = np.random.default_rng(0).standard_normal(50000).cumsum()
ess(x[:200])
t = time.perf_counter()
for _ in range(20):
    ess(x)
t_ess = (time.perf_counter() - t) / 20
print(f"{backend():6s} lbfgs {rec.iterations} iters {t_opt:.3f}s  ess(50k) {t_ess * 1e3:.2f}ms")
"""


def end_to_end() -> None:
    for flag in ("0", "1"):
        env = dict(os.environ, HESSAPPROX_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True)
        print(out.stdout.strip() or out.stderr.strip())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    kernel_table(args.repeat)
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
