"""L-BFGS with a pluggable initial inverse Hessian.

The two-loop recursion runs on flattened fields. Gradients are Riesz
representatives in the area-weighted inner product; since the cell area is
a constant factor it cancels in every ratio of the recursion and in the
Wolfe conditions, so plain dot products are used throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import LineSearchFailed, NonDescentDirection

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 500
    grad_reduction_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_trials: int = 40
    h0_scaling: bool = False   # rescale a supplied h0 by s.y / y.H0.y each iteration
    snapshot_every: int = 0

    def __post_init__(self):
        if not (0 < self.c1 < self.c2 < 1):
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")


@dataclass
class RunRecord:
    objective: list = field(default_factory=list)
    misfit: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    sol_error: list = field(default_factory=list)
    n_fev: int = 0
    converged: bool = False
    snapshots: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.grad_norm) - 1

    def to_rows(self):
        for i in range(len(self.grad_norm)):
            err = self.sol_error[i] if i < len(self.sol_error) else float("nan")
            yield i, self.misfit[i], self.grad_norm[i], err


class _Memory:
    def __init__(self, m: int):
        self.m = m
        self.S: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []

    def clear(self):
        self.S.clear()
        self.Y.clear()

    def push(self, s, y):
        if float(s @ y) <= 1e-300:
            log.debug("skipping update with non-positive curvature")
            return
        self.S.append(s)
        self.Y.append(y)
        if len(self.S) > self.m:
            self.S.pop(0)
            self.Y.pop(0)

    def direction(self, g: np.ndarray, h0: Callable | None, scale_h0: bool) -> np.ndarray:
        if not self.S:
            return -(h0(g) if h0 is not None else g)
        S = np.array(self.S)
        Y = np.array(self.Y)
        rho = 1.0 / np.einsum("ij,ij->i", S, Y)
        q, alpha = kernels.lbfgs_first_loop(S, Y, rho, g)
        s, y = S[-1], Y[-1]
        if h0 is None:
            r = (s @ y) / (y @ y) * q
        else:
            r = h0(q)
            if scale_h0:
                r *= (s @ y) / (y @ h0(y))
        return -kernels.lbfgs_second_loop(S, Y, rho, alpha, r)


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic through two points with slopes, or ``None``."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    den = db - da + 2.0 * d2
    if den == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / den


def strong_wolfe(phi, f0: float, d0: float, alpha1: float = 1.0, c1: float = 1e-4,
                 c2: float = 0.9, max_trials: int = 40, alpha_max: float = 1e10,
                 f_eps: float = 1e-12):
    """Strong-Wolfe line search with safeguarded cubic interpolation.

    ``phi(alpha)`` returns ``(f, slope)``. Near convergence objective
    differences drop to round-off; there the sufficient-decrease test also
    accepts points with ``f <= f0 + f_eps |f0|`` whose slope satisfies the
    approximate-Wolfe bound ``slope <= (2 c1 - 1) d0``. Returns
    ``(alpha, f, trials)``; ``alpha`` is ``None`` on failure.
    """
    tol_f = f_eps * max(abs(f0), 1.0)
    trials = 0

    def suff(a, f, d):
        return f <= f0 + c1 * a * d0 or (f <= f0 + tol_f and d <= (2 * c1 - 1) * d0)

    def curv(d):
        return abs(d) <= -c2 * d0

    def worse(f, f_ref):
        return f > f_ref + tol_f

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal trials
        while trials < max_trials:
            width = hi - lo
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            margin = 0.1 * abs(width)
            if a is None or not (lo_b + margin <= a <= hi_b - margin):
                a = 0.5 * (lo + hi)
            f, d = phi(a)
            trials += 1
            if not suff(a, f, d) or worse(f, flo):
                hi, fhi, dhi = a, f, d
            else:
                if curv(d):
                    return a, f
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, d
            if abs(hi - lo) < 1e-16 * max(abs(lo), 1.0):
                break
        return None, None

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha1
    while trials < max_trials:
        f, d = phi(a)
        trials += 1
        if not suff(a, f, d) or (a_prev > 0 and worse(f, f_prev)):
            res = zoom(a_prev, f_prev, d_prev, a, f, d)
            return res[0], res[1], trials
        if curv(d):
            return a, f, trials
        if d >= 0:
            res = zoom(a, f, d, a_prev, f_prev, d_prev)
            return res[0], res[1], trials
        a_prev, f_prev, d_prev = a, f, d
        a = min(4.0 * a, alpha_max)
    return None, None, trials


def check_spd(h0: Callable, n: int, rng=0, trials: int = 5) -> None:
    rng = np.random.default_rng(rng)
    for _ in range(trials):
        v = rng.standard_normal(n)
        q = float(v @ h0(v))
        if not q > 0:
            raise ValueError(f"initial inverse Hessian is not positive definite (v.H0 v = {q:.3e})")


def minimize(problem, h0=None, cfg: LbfgsConfig = LbfgsConfig(), start: np.ndarray | None = None,
             reference: np.ndarray | None = None, callback=None):
    """Minimise ``problem.objective`` from ``start`` (zero by default).

    ``h0`` maps a gradient field to a field and approximates the inverse
    Hessian. Returns ``(solution, RunRecord)``.
    """
    g2 = problem.grid
    shape = g2.shape
    x = np.zeros(g2.size) if start is None else np.array(start, dtype=float).reshape(-1)
    h0_flat = None
    if h0 is not None:
        h0_flat = lambda v: np.asarray(h0(v.reshape(shape)), dtype=float).reshape(-1)  # noqa: E731
        check_spd(h0_flat, g2.size)

    rec = RunRecord()
    cache: dict = {}

    def fg(xf):
        key = xf.tobytes()
        if cache.get("key") != key:
            if hasattr(problem, "objective_and_gradient"):
                f, gr = problem.objective_and_gradient(xf.reshape(shape))
            else:
                f, gr = problem.objective(xf.reshape(shape)), problem.gradient(xf.reshape(shape))
            cache.update(key=key, f=float(f), g=np.asarray(gr, dtype=float).reshape(-1))
            rec.n_fev += 1
        return cache["f"], cache["g"]

    def log_state(xf, f, gr):
        rec.objective.append(f)
        rec.misfit.append(float(problem.misfit(xf.reshape(shape))) if hasattr(problem, "misfit") else f)
        rec.grad_norm.append(float(np.sqrt(gr @ gr * g2.cell_area)))
        if reference is not None:
            rec.sol_error.append(g2.norm(xf.reshape(shape) - reference))
        it = len(rec.grad_norm) - 1
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            rec.snapshots[it] = xf.reshape(shape).copy()
        if callback is not None:
            callback(it, xf.reshape(shape), f, gr.reshape(shape))

    f, gr = fg(x)
    log_state(x, f, gr)
    g0 = rec.grad_norm[0]
    if g0 == 0:
        rec.converged = True
        return x.reshape(shape), rec
    mem = _Memory(cfg.memory)
    for _ in range(cfg.max_iters):
        p = mem.direction(gr, h0_flat, cfg.h0_scaling)
        if not (p @ gr < 0):
            mem.clear()
            p = mem.direction(gr, h0_flat, cfg.h0_scaling)
            if not (p @ gr < 0):
                raise NonDescentDirection("no descent direction after memory reset")
        alpha0_scale = 1.0
        if not mem.S and h0_flat is None:
            alpha0_scale = min(1.0, 1.0 / np.sqrt(gr @ gr))
        pp = p * alpha0_scale
        d0 = float(gr @ pp)

        def phi(a):
            fa, ga = fg(x + a * pp)
            return fa, float(ga @ pp)

        alpha, _, _ = strong_wolfe(phi, f, d0, 1.0, cfg.c1, cfg.c2, cfg.max_ls_trials)
        if alpha is None:
            if mem.S:
                log.debug("line search failed; retrying with cleared memory")
                mem.clear()
                continue
            raise LineSearchFailed(f"no strong-Wolfe point in {cfg.max_ls_trials} trials")
        s = alpha * pp
        x_new = x + s
        f_new, g_new = fg(x_new)
        mem.push(s, g_new - gr)
        f, x, gr = f_new, x_new, g_new
        log_state(x, f, gr)
        if rec.grad_norm[-1] <= cfg.grad_reduction_tol * g0:
            rec.converged = True
            break
    return x.reshape(shape), rec
