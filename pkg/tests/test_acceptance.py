"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about 10 minutes on
one core); the summary lines appear at the end of the pytest output.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from hessapprox import mcmc
from hessapprox import pipeline as PL
from hessapprox import probing as P
from hessapprox.config import PipelineConfig, load_config
from hessapprox.grid import Grid2D, forward_transform, inverse_transform
from hessapprox.laplace import build_laplace, build_spd_factor
from hessapprox.lowrank import lowrank_hessian_apply, lowrank_sample_from, randomized_gen_eig
from hessapprox.optimize import LbfgsConfig, minimize
from hessapprox.prior import BiharmonicPrior
from hessapprox.psido import (dense_materialize, diagonal_operator, multiplier_operator,
                              psido_apply, psido_apply_adjoint)
from hessapprox.quadratic import build_quadratic_problem, build_toy_symbol, toy_symbol_closed_form

from conftest import ACCEPTANCE, dft_matrices, random_symbol


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line, flush=True)
    assert ok, line


def sized(cfg: PipelineConfig, nx: int, nz: int, **model) -> PipelineConfig:
    return replace(cfg, model=replace(cfg.model, nx=nx, nz=nz, **model))


# -- 1 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_1_operator_fidelity():
    t0 = time.perf_counter()
    cfg = sized(PipelineConfig(), 32, 32)
    prob = PL.make_problem(cfg)
    g = prob.grid
    res, _ = PL.run_probing(cfg, prob, "sqrt")
    _, _, hp = PL.make_plans(cfg, g)
    K = dense_materialize(P.wrap_highpass(prob.data_hessian_op, hp, g), g)
    exact = lambda v: (K @ v.ravel()).reshape(g.shape)  # noqa: E731
    probes = P.band_limited_probes(g, 10, cfg.stage_seed("acceptance-1"), highpass=hp)
    err = {}
    for m in PL.METHODS:
        s = PL.method_symbol(cfg, res, m)
        approx = lambda v, s=s: psido_apply(s, psido_apply_adjoint(s, v))  # noqa: E731
        err[m] = float(np.median(P.relative_errors(exact, approx, probes)))
    dt = time.perf_counter() - t0
    ok = err["psfplus"] <= err["psf"] and err["psfplus"] <= err["pdo"] and dt < 120
    report(1, ok, "median rel err " + ", ".join(f"{k}={v:.4f}" for k, v in err.items()) + f" ({dt:.0f}s)")


# -- 2 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_preconditioner_ordering():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "lbfgs64x32.ini")
    assert cfg.grid_shape == (64, 32)
    prob = PL.make_problem(cfg)
    res, _ = PL.run_probing(cfg, prob, "sqrt")
    lb = LbfgsConfig(memory=cfg.lbfgs.memory, max_iters=cfg.lbfgs.max_iters,
                     grad_reduction_tol=cfg.lbfgs.grad_reduction_tol)
    it = {}
    for name in PL.PRECONDS:
        h0 = PL.preconditioner(cfg, prob, name, res)
        _, rec = minimize(prob, h0, lb)
        assert rec.converged, name
        it[name] = rec.iterations
    dt = time.perf_counter() - t0
    mid_lo, mid_hi = min(it["psf"], it["pdo"]), max(it["psf"], it["pdo"])
    ok = (it["psfplus"] <= 0.9 * mid_lo and mid_hi <= 0.9 * it["prior"]
          and it["prior"] <= 0.9 * it["none"] and dt < 600)
    report(2, ok, "iterations " + ", ".join(f"{k}={v}" for k, v in it.items()) + f" ({dt:.0f}s)")


# -- 3 and 4 ------------------------------------------------------------------

def uq_config() -> PipelineConfig:
    # 24x24, data_scale 25, corr_length 10, correction rank 150, 20000 samples
    cfg = load_config(CONFIGS / "uq24x24.ini")
    assert cfg.grid_shape == (24, 24) and cfg.lowrank.rank == 20 and cfg.chain.n_samples >= 20000
    return cfg


@pytest.fixture(scope="module")
def uq_runs():
    t0 = time.perf_counter()
    cfg = uq_config()
    prob = PL.make_problem(cfg)
    g = prob.grid
    _, cov = prob.exact_posterior()
    sd = np.sqrt(np.diag(cov)).reshape(g.shape)
    m_map = PL.solve_map(prob)
    res, _ = PL.run_probing(cfg, prob, "sqrt")
    out = {}
    for tag, method, hess in (("gpcn-psfplus", "gpcn", "psfplus"), ("gpcn-lr", "gpcn", "lr"), ("pcn", "pcn", "psfplus")):
        seed = cfg.stage_seed(f"sample/{tag}")
        L = PL.build_laplace_for(cfg, prob, hess, m_map, seed, res).densify()
        chain, _, _ = PL.run_sampler(cfg, prob, method, L, seed)
        st = mcmc.chain_statistics(chain)
        out[tag] = {"err": float(np.linalg.norm(st["std"] - sd) / np.linalg.norm(sd)),
                    "ratio": float(np.mean(st["std"] / sd)), "ess": np.array(st["ess"]),
                    "n": chain.config.n_samples}
    out["seconds"] = time.perf_counter() - t0
    return out


@pytest.mark.slow
def test_criterion_3_std_accuracy(uq_runs):
    r = uq_runs
    ok = (r["gpcn-psfplus"]["err"] < 0.2 and r["pcn"]["ratio"] < 0.8 and r["gpcn-lr"]["ratio"] < 0.8
          and min(v["n"] for k, v in r.items() if k != "seconds") >= 20000 and r["seconds"] < 1200)
    report(3, ok, f"gpCN-PSF+ std rel err {r['gpcn-psfplus']['err']:.3f}, "
                  f"mean std ratio pCN {r['pcn']['ratio']:.3f}, gpCN-LR {r['gpcn-lr']['ratio']:.3f} "
                  f"({r['seconds']:.0f}s)")


@pytest.mark.slow
def test_criterion_4_ess_improvement(uq_runs):
    ratio = uq_runs["gpcn-psfplus"]["ess"] / uq_runs["pcn"]["ess"]
    ok = int(np.sum(ratio >= 5.0)) >= 4
    report(4, ok, "ESS ratio gpCN-PSF+/pCN " + ", ".join(f"{x:.1f}" for x in ratio))


# -- 5 ----------------------------------------------------------------------

class _ReferenceTarget:
    def __init__(self, L):
        self.L = L

    def objective(self, m):
        return self.L.quad_form(m - self.L.m_map)


def test_criterion_5_gpcn_invariant():
    t0 = time.perf_counter()
    prob = build_quadratic_problem(Grid2D(16, 16), corr_length=4.0)
    g = prob.grid
    res = P.probe_operator(prob.data_hessian_op, P.make_psf_plan(g, 4, 4), P.choose_probe_frequencies(g),
                           "sqrt", "taper", P.HighPassSpec.relative(0.6 * g.freqs.nyquist, 0.2, 0.2))
    M, iM = build_spd_factor(res.symbol("psfplus", basis_rank=None), prob.prior)
    L = build_laplace(prob.apply_hessian, PL.solve_map(prob), M, iM, k=30, rng_seed=0).densify()
    ch = mcmc.run_gpcn(_ReferenceTarget(L), L, mcmc.ChainConfig(0.5, 10000, seed=0), record_delta=True)
    spread = float(np.ptp(ch.delta_trace))
    dt = time.perf_counter() - t0
    ok = ch.acceptance_rate == 1.0 and spread < 1e-8 and dt < 60
    report(5, ok, f"acceptance {ch.acceptance_rate:.4f}, max |delta difference| {spread:.2e} ({dt:.0f}s)")


# -- 6 ----------------------------------------------------------------------

def test_criterion_6_lowrank_sampler_covariance():
    t0 = time.perf_counter()
    cfg = sized(PipelineConfig(), 12, 12)
    prob = PL.make_problem(cfg)
    g, pr = prob.grid, prob.prior
    lr = cfg.lowrank
    pairs = randomized_gen_eig(prob.apply_data_hessian, pr, lr.rank, lr.oversample, lr.power_iters,
                               cfg.stage_seed("lowrank"))
    Hm = dense_materialize(lambda v: lowrank_hessian_apply(pairs, pr, v) + pr.apply_precision(v), g)
    C = np.linalg.inv(g.cell_area * 0.5 * (Hm + Hm.T))   # covariance of grid values
    n, batch = 200_000, 20_000
    rng = np.random.default_rng(cfg.stage_seed("sample/lr"))
    S = np.zeros((g.size, g.size))
    for _ in range(n // batch):
        z = pr.apply_power(rng.standard_normal((batch,) + g.shape) / np.sqrt(g.cell_area), -0.5)
        X = lowrank_sample_from(pairs, pr, z).reshape(batch, -1)
        S += X.T @ X
    S /= n
    d = np.diag(C)
    se = np.sqrt((np.outer(d, d) + C * C) / n)
    zmax = float(np.max(np.abs(S - C) / se))
    dt = time.perf_counter() - t0
    ok = zmax <= 4.0 and dt < 120
    report(6, ok, f"max entrywise deviation {zmax:.2f} MC standard errors over {g.size}x{g.size} ({dt:.0f}s)")


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_kernel_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    # FFT round trip
    e = 0.0
    for shape, (dx, dz) in (((16, 16), (1.0, 1.0)), ((30, 20), (1.5, 0.7)), ((7, 9), (0.3, 2.0))):
        g = Grid2D(*shape, dx, dz)
        f = rng.standard_normal(g.shape)
        e = max(e, np.abs(inverse_transform(forward_transform(f, g), g) - f).max() / np.abs(f).max())
    worst["fft round trip"] = (e, 1e-12)
    # psido apply vs dense oracle and adjoint identity
    g = Grid2D(16, 16)
    F, Finv = dft_matrices(g)
    e_apply = e_adj = 0.0
    for k in range(20):
        sym = random_symbol(g, 1 + k % 5, rng, hermitian=k % 2 == 0)
        S = sym.a.reshape(sym.rank, -1).T @ sym.b.reshape(sym.rank, -1)
        Kd = (Finv * S) @ F
        u, v = rng.standard_normal((2,) + g.shape)
        ref = (Kd @ u.ravel()).real.reshape(g.shape)
        e_apply = max(e_apply, np.abs(psido_apply(sym, u) - ref).max() / np.abs(ref).max())
        lhs, rhs = g.inner(psido_apply(sym, u), v), g.inner(u, psido_apply_adjoint(sym, v))
        e_adj = max(e_adj, abs(lhs - rhs) / (g.norm(psido_apply(sym, u)) * g.norm(v)))
    worst["psido vs dense"] = (e_apply, 1e-10)
    worst["adjoint identity"] = (e_adj, 1e-10)
    # prior powers compose
    p = BiharmonicPrior(Grid2D(20, 14, 1.0, 1.3), 0.5, 2.0)
    e = 0.0
    for a, b in ((0.5, 0.5), (-0.5, 1.0), (1.0, -1.0), (-0.25, -0.75)):
        m = rng.standard_normal(p.grid.shape)
        rhs = p.apply_power(m, a + b)
        e = max(e, np.abs(p.apply_power(p.apply_power(m, a), b) - rhs).max() / max(1.0, np.abs(rhs).max()))
    worst["prior powers"] = (e, 1e-10)
    # gradient vs central differences
    prob = build_quadratic_problem(Grid2D(20, 16), corr_length=4.0)
    m = rng.standard_normal(prob.grid.shape)
    gr = prob.gradient(m)
    e = 0.0
    for _ in range(5):
        d = rng.standard_normal(prob.grid.shape)
        h = 1e-4
        fd = (prob.objective(m + h * d) - prob.objective(m - h * d)) / (2 * h)
        an = prob.grid.inner(gr, d)
        e = max(e, abs(fd - an) / abs(an))
    worst["gradient fd"] = (e, 1e-6)
    # toy symbol rank-3 identity
    e = 0.0
    for tg in (Grid2D(32, 16), Grid2D(24, 12, 2.0, 0.5)):
        sym = build_toy_symbol(tg)
        C = toy_symbol_closed_form(tg)
        e = max(e, np.abs(sym.to_dense_symbol() - C).max() / np.abs(C).max() if sym.rank == 3 else np.inf)
    worst["toy rank-3"] = (e, 1e-14)
    dt = time.perf_counter() - t0
    ok = all(v <= tol for v, tol in worst.values()) and dt < 60
    report(7, ok, ", ".join(f"{k} {v:.1e}" for k, (v, _) in worst.items()) + f" ({dt:.0f}s)")


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_probing_oracles():
    t0 = time.perf_counter()
    g = Grid2D(32, 32)
    rho = g.freqs.magnitude
    mult = 0.5 + np.exp(-(1.5 * rho) ** 2)
    rows = P.probe_psfs(multiplier_operator(g, mult), P.make_psf_plan(g, 2, 2)).symbol_rows.reshape(-1, *g.shape)
    band = mult > 0.01 * mult.max()
    e_psf = float(np.abs(rows - mult[None])[:, band].max() / np.abs(mult).max())
    X, Z = g.coords
    c = 1.0 + 0.5 * np.cos(2 * np.pi * X / g.x_max) + 0.3 * np.sin(2 * np.pi * Z / g.z_max)
    plan = P.choose_probe_frequencies(g)
    cols = P.probe_columns(diagonal_operator(g, c), plan).cols
    e_pdo = float(np.abs(cols - c.reshape(-1, 1)).max() / np.abs(c).max())
    e_w = 0.0
    for shape in ((32, 32), (64, 32), (30, 20)):
        pl = P.choose_probe_frequencies(Grid2D(*shape))
        for order in (0.5, 1.0):
            W = P.build_pdo_weights(pl, order).reshape(pl.n_angles, -1)[:, pl.flat_freq_index]
            e_w = max(e_w, float(np.abs(W - np.eye(pl.n_angles)).max()))
    dt = time.perf_counter() - t0
    ok = e_psf < 0.01 and e_pdo < 0.01 and e_w <= 1e-12 and dt < 60
    report(8, ok, f"PSF row err {e_psf:.1e}, PDO column err {e_pdo:.1e}, weight interpolation {e_w:.1e} ({dt:.0f}s)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
