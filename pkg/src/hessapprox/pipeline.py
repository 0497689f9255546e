"""Pipeline stages: approx, invert, sample, diagnose, oracle, report.

Each stage writes into ``<output_dir>/<stage>/...`` and records a
``stage.json`` holding a fingerprint of the config and arguments it ran
with. Re-running a stage whose fingerprint matches returns the stored
summary without touching any file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import hpf1
from . import laplace as LA
from . import mcmc
from . import probing as P
from .config import PipelineConfig
from .errors import ConfigError
from .errors import MissingArtifacts, TooLarge
from .grid import Grid2D
from .lowrank import randomized_gen_eig
from .optimize import LbfgsConfig, minimize
from .psido import DENSE_LIMIT, LowRankSymbol, dense_materialize, psido_apply, psido_apply_adjoint
from .quadratic import QuadraticProblem, build_quadratic_problem

log = logging.getLogger(__name__)

METHODS = ("psf", "pdo", "psfplus")
PRECONDS = ("none", "prior", "psf", "pdo", "psfplus")
HESSIANS = ("lr", "psf", "pdo", "psfplus")
SAMPLERS = ("pcn", "gpcn")


# --------------------------------------------------------------------------
# building blocks


def make_grid(cfg: PipelineConfig) -> Grid2D:
    nx, nz = cfg.grid_shape
    return Grid2D(nx, nz, cfg.model.dx, cfg.model.dz)


def make_problem(cfg: PipelineConfig) -> QuadraticProblem:
    m, p = cfg.model, cfg.prior
    target = None
    if m.target_file is not None:
        path = Path(m.target_file)
        if not path.is_file():
            raise ConfigError(f"target_file {path} does not exist")
        target = hpf1.read_array(path)
        if target.shape != (cfg.grid_shape[1], cfg.grid_shape[0]):
            raise ConfigError(f"target_file shape {target.shape} does not match grid {cfg.grid_shape[::-1]}")
    return build_quadratic_problem(
        make_grid(cfg), delta=p.delta, gamma=p.gamma, corr_length=p.corr_length,
        prior_std=p.std, n_modes=m.n_modes, mode_decay=m.mode_decay,
        mode_weight_range=(m.mode_weight_max, m.mode_weight_min),
        target=target, target_seed=m.target_seed, data_scale=m.data_scale, band_frac=m.band_frac)


def make_plans(cfg: PipelineConfig, grid: Grid2D):
    pr = cfg.probe
    psf_plan = P.make_psf_plan(grid, pr.points_x, pr.points_z)
    pdo_plan = P.choose_probe_frequencies(grid, pr.rho0_frac * grid.freqs.nyquist, pr.n_angles)
    hp = None
    if pr.highpass_cutoff > 0:
        hp = P.HighPassSpec.relative(pdo_plan.rho0, pr.highpass_cutoff, pr.highpass_width)
    return psf_plan, pdo_plan, hp


def run_probing(cfg: PipelineConfig, problem: QuadraticProblem, transform: str | None = None):
    """Probe the windowed misfit Hessian. Returns ``(ProbeResult, matvec counts)``."""
    psf_plan, pdo_plan, hp = make_plans(cfg, problem.grid)
    op = problem.data_hessian_op
    before = op.ncalls
    res = P.probe_operator(op, psf_plan, pdo_plan, transform or cfg.probe.transform,
                           cfg.probe.edge, hp)
    total = op.ncalls - before
    n_psf = len(psf_plan.batches)
    counts = {"psf": n_psf, "pdo": total - n_psf, "psfplus": total}
    return res, counts


def method_symbol(cfg: PipelineConfig, res: P.ProbeResult, method: str) -> LowRankSymbol:
    if method == "psfplus":
        return res.symbol(method, basis_rank=cfg.probe.basis_rank, sv_threshold=cfg.probe.sv_threshold)
    return res.symbol(method)


def spd_factors(cfg: PipelineConfig, problem: QuadraticProblem, sym_sqrt: LowRankSymbol | None):
    return LA.build_spd_factor(sym_sqrt, problem.prior, cfg.laplace.stride, cfg.laplace.rank_tol)


def preconditioner(cfg: PipelineConfig, problem: QuadraticProblem, name: str, res=None):
    """Initial inverse Hessian for L-BFGS; ``None`` means identity."""
    if name == "none":
        return None
    if name == "prior":
        return problem.prior.apply_covariance
    if name not in METHODS:
        raise ValueError(f"unknown preconditioner {name!r}")
    if res is None:
        res, _ = run_probing(cfg, problem, "sqrt")
    _, inv_M = spd_factors(cfg, problem, method_symbol(cfg, res, name))
    return lambda v: inv_M.apply_adjoint(inv_M.apply(v))


def solve_map(problem: QuadraticProblem, tol: float = 1e-12) -> np.ndarray:
    """MAP point of the quadratic problem by preconditioned CG on the normal equations."""
    g = problem.grid
    rhs = problem.window * problem.b + problem.prior.apply_precision(problem.prior.mean_field)
    res = LA.conjugate_gradient(problem.apply_hessian, rhs, g, tol=tol, max_iter=5000,
                                precond=problem.prior.apply_covariance)
    return res.x


def build_laplace_for(cfg: PipelineConfig, problem: QuadraticProblem, hessian: str,
                      m_map: np.ndarray, seed: int, res=None) -> LA.LaplaceApproximation:
    if hessian == "lr":
        lr = cfg.lowrank
        pairs = randomized_gen_eig(problem.apply_data_hessian, problem.prior, lr.rank,
                                   lr.oversample, lr.power_iters, seed)
        return LA.lowrank_laplace(pairs, problem.prior, m_map)
    if hessian not in METHODS:
        raise ValueError(f"unknown hessian approximation {hessian!r}")
    if res is None:
        res, _ = run_probing(cfg, problem, "sqrt")
    M, inv_M = spd_factors(cfg, problem, method_symbol(cfg, res, hessian))
    L = LA.build_laplace(problem.apply_hessian, m_map, M, inv_M, cfg.laplace.correction_rank,
                         rng_seed=seed)
    L.cg_tol = cfg.laplace.cg_tol
    return L


def run_sampler(cfg: PipelineConfig, problem: QuadraticProblem, method: str, L, seed: int,
                beta: float | None = None):
    """Tune ``beta`` by a pilot (unless given) and run one chain."""
    ch = cfg.chain
    pts = ch.probe_points

    def run(b, n, s, burn=None, thin=ch.thin):
        cc = mcmc.ChainConfig(b, n, burn, s, pts, thin)
        if method == "gpcn":
            return mcmc.run_gpcn(problem, L, cc)
        return mcmc.run_pcn(problem, problem.prior, cc, start=L.m_map if L is not None else None)

    if beta is None:
        beta = ch.beta
    pilot_rate = None
    if beta is None:
        beta, pilot_rate = mcmc.tune_beta(lambda b, n, s: run(b, n, s, 0, n), pilot=ch.pilot, seed=seed + 1)
    chain = run(beta, ch.n_samples, seed, ch.burn_in)
    return chain, beta, pilot_rate


# --------------------------------------------------------------------------
# stage bookkeeping


def _fingerprint(cfg: PipelineConfig, stage: str, args: dict) -> str:
    blob = json.dumps({"config": cfg.to_dict(), "stage": stage, "args": args}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _cached(directory: Path, fp: str):
    f = directory / "stage.json"
    if f.is_file():
        rec = json.loads(f.read_text())
        if rec.get("fingerprint") == fp:
            return rec["summary"]
    return None


def _finish(directory: Path, fp: str, summary: dict) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "stage.json").write_text(
        json.dumps({"fingerprint": fp, "summary": summary}, indent=2, sort_keys=True) + "\n")
    return summary


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in r])


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# stages


def cmd_approx(cfg: PipelineConfig) -> dict:
    """Probe, build the three symbols and report probe-estimated errors."""
    out = cfg.output_dir / "approx"
    fp = _fingerprint(cfg, "approx", {})
    hit = _cached(out, fp)
    if hit is not None:
        return hit
    problem = make_problem(cfg)
    g = problem.grid
    res, counts = run_probing(cfg, problem)
    syms = {m: method_symbol(cfg, res, m) for m in METHODS}
    for m, s in syms.items():
        s.save(out / m, {"method": m, "transform": cfg.probe.transform, "matvecs": counts[m]})
    hpf1.write_bundle(out / "probes", {
        **{f"psf{i:03d}": p for i, p in enumerate(res.psfset.psfs)},
        "columns": res.columns.cols,
        "pdo_freq_index": res.columns.plan.freq_index.astype(float),
    }, {"kind": "ProbeArtifacts", "n_psf": len(res.psfset.psfs), "rho0": res.columns.plan.rho0})

    # errors against the probed operator itself, on band-limited probes
    _, _, hp = make_plans(cfg, g)
    exact = P.wrap_highpass(problem.data_hessian_op, hp, g) if hp is not None else problem.data_hessian_op
    probes = P.band_limited_probes(g, 10, cfg.stage_seed("approx"), highpass=hp)
    errs = {}
    for m, s in syms.items():
        if cfg.probe.transform == "sqrt":
            approx = (lambda s: lambda v: psido_apply(s, psido_apply_adjoint(s, v)))(s)
        else:
            approx = (lambda s: lambda v: psido_apply(s, v))(s)
        errs[m] = float(np.median(P.relative_errors(exact, approx, probes)))
    _write_csv(out / "errors.csv", ["method", "median_rel_error", "matvecs"],
               [(m, errs[m], counts[m]) for m in METHODS])
    log.info("matvecs: %s", counts)
    return _finish(out, fp, {"errors": errs, "matvecs": counts})


def cmd_invert(cfg: PipelineConfig, precond: str) -> dict:
    if precond not in PRECONDS:
        raise ValueError(f"unknown preconditioner {precond!r}")
    out = cfg.output_dir / "invert" / precond
    fp = _fingerprint(cfg, "invert", {"precond": precond})
    hit = _cached(out, fp)
    if hit is not None:
        return hit
    problem = make_problem(cfg)
    h0 = preconditioner(cfg, problem, precond)
    lb = cfg.lbfgs
    lcfg = LbfgsConfig(memory=lb.memory, max_iters=lb.max_iters,
                       grad_reduction_tol=lb.grad_reduction_tol, snapshot_every=lb.snapshot_every)
    ref = solve_map(problem)
    t0 = time.perf_counter()
    x, rec = minimize(problem, h0, lcfg, reference=ref)
    elapsed = time.perf_counter() - t0
    _write_csv(out / "record.csv", ["iter", "misfit", "gradnorm", "solerr"], list(rec.to_rows()))
    if rec.snapshots:
        hpf1.write_bundle(out / "snapshots", {f"it{k:05d}": v for k, v in rec.snapshots.items()},
                          {"kind": "Snapshots", "precond": precond})
    hpf1.write_array(out / "solution.hpf", x)
    summary = {"precond": precond, "iterations": rec.iterations, "converged": rec.converged,
               "n_fev": rec.n_fev, "final_solerr": rec.sol_error[-1]}
    log.info("invert %s: %d iterations (%.1fs)", precond, rec.iterations, elapsed)
    return _finish(out, fp, summary)


def cmd_sample(cfg: PipelineConfig, method: str, hessian: str) -> dict:
    if method not in SAMPLERS:
        raise ValueError(f"unknown sampler {method!r}")
    if hessian not in HESSIANS:
        raise ValueError(f"unknown hessian approximation {hessian!r}")
    tag = "pcn" if method == "pcn" else f"gpcn-{hessian}"
    out = cfg.output_dir / "sample" / tag
    fp = _fingerprint(cfg, "sample", {"method": method, "hessian": hessian if method == "gpcn" else None})
    hit = _cached(out, fp)
    if hit is not None:
        return hit
    problem = make_problem(cfg)
    seed = cfg.stage_seed(f"sample/{tag}")
    m_map = solve_map(problem)
    L = build_laplace_for(cfg, problem, hessian, m_map, seed) if method == "gpcn" else None
    if L is not None and problem.grid.size <= DENSE_LIMIT:
        L.densify()   # explicit factors beat CG per step on small grids
    if L is None:
        # pCN starts from the MAP point too, so both samplers see the same start
        L = LA.LaplaceApproximation(problem.grid, m_map, *LA.build_spd_factor(None, problem.prior),
                                    np.zeros((0,) + problem.grid.shape), np.zeros(0), exact_inverse=True)
    chain, beta, pilot = run_sampler(cfg, problem, method, L, seed)
    stats = mcmc.chain_statistics(chain)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "traces.csv", ["step"] + [f"x{i + 1}" for i in range(len(chain.probe_points))],
               [(i, *map(float, chain.probe_traces[:, i])) for i in range(chain.probe_traces.shape[1])])
    hpf1.write_array(out / "mean.hpf", stats["mean"])
    hpf1.write_array(out / "std.hpf", stats["std"])
    lines = [f"sampler: {tag}", f"beta: {beta:.6g}", f"acceptance_rate: {chain.acceptance_rate:.4f}",
             f"samples: {cfg.chain.n_samples}", f"burn_in: {chain.config.burn}"]
    lines += [f"ess x{i + 1} {tuple(p)}: {e:.1f}" for i, (p, e) in enumerate(zip(chain.probe_points, stats["ess"]))]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    summary = {"sampler": tag, "beta": beta, "pilot_acceptance": pilot,
               "acceptance_rate": chain.acceptance_rate, "ess": stats["ess"],
               "probe_points": [list(map(int, p)) for p in chain.probe_points]}
    return _finish(out, fp, summary)


def _sample_runs(cfg: PipelineConfig) -> list[Path]:
    root = cfg.output_dir / "sample"
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if (p / "stage.json").is_file())


def cmd_diagnose(cfg: PipelineConfig) -> dict:
    """Autocorrelation, ESS and histograms for every finished chain."""
    runs = _sample_runs(cfg)
    if not runs:
        raise MissingArtifacts(f"no sample runs under {cfg.output_dir / 'sample'}")
    out = cfg.output_dir / "diagnose"
    fp = _fingerprint(cfg, "diagnose", {"runs": [r.name for r in runs],
                                        "stamps": [(r / "stage.json").read_text() for r in runs]})
    hit = _cached(out, fp)
    if hit is not None:
        return hit
    burn = cfg.chain.burn_in if cfg.chain.burn_in is not None else cfg.chain.n_samples // 10
    summary = {}
    for run in runs:
        rows = _read_csv(run / "traces.csv")
        keys = [k for k in rows[0] if k != "step"]
        traces = np.array([[float(r[k]) for r in rows] for k in keys])[:, burn:]
        acf_rows, hist_rows, ess_vals = [], [], []
        max_lag = min(200, traces.shape[1])
        for k, tr in zip(keys, traces):
            acf = mcmc.autocorrelation(tr)[:max_lag]
            acf_rows.append(acf)
            ess_vals.append(mcmc.ess(tr))
            counts, edges = (np.histogram(tr, bins="fd") if np.ptp(tr) > 0
                             else (np.array([tr.size]), np.array([tr[0] - 0.5, tr[0] + 0.5])))
            hist_rows += [(k, float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]
        _write_csv(out / run.name / "autocorrelation.csv", ["lag"] + keys,
                   [(i, *map(float, col)) for i, col in enumerate(np.array(acf_rows).T)])
        _write_csv(out / run.name / "histograms.csv", ["point", "lo", "hi", "count"], hist_rows)
        summary[run.name] = {"ess": ess_vals}
    return _finish(out, fp, summary)


def cmd_oracle(cfg: PipelineConfig) -> dict:
    """Dense Hessian, exact posterior and generalized eigenvalues (small grids)."""
    g = make_grid(cfg)
    if g.size > DENSE_LIMIT:
        raise TooLarge(f"N={g.size} exceeds dense limit {DENSE_LIMIT}")
    out = cfg.output_dir / "oracle"
    fp = _fingerprint(cfg, "oracle", {})
    hit = _cached(out, fp)
    if hit is not None:
        return hit
    problem = make_problem(cfg)
    H = dense_materialize(problem.apply_hessian, g)
    Hd = dense_materialize(problem.apply_data_hessian, g)
    mean, cov = problem.exact_posterior()
    std = np.sqrt(np.diag(cov)).reshape(g.shape)
    # generalized eigenvalues of H_d v = lam R v through the whitened matrix
    W = dense_materialize(lambda v: problem.prior.apply_power(v, -0.5), g)
    Hw = W @ Hd @ W
    lam = np.sort(np.linalg.eigvalsh(0.5 * (Hw + Hw.T)))[::-1]
    hpf1.write_array(out / "hessian.hpf", 0.5 * (H + H.T))
    hpf1.write_array(out / "posterior_mean.hpf", mean)
    hpf1.write_array(out / "posterior_std.hpf", std)
    hpf1.write_array(out / "gen_eigenvalues.hpf", lam)
    return _finish(out, fp, {"n": g.size, "min_std": float(std.min()), "max_std": float(std.max()),
                             "lambda_max": float(lam[0])})


def cmd_report(cfg: PipelineConfig) -> dict:
    """Summary tables from whatever stages have run."""
    root = cfg.output_dir
    inv_root = root / "invert"
    inv = [p for p in sorted(inv_root.iterdir())] if inv_root.is_dir() else []
    inv = [p for p in inv if (p / "stage.json").is_file()]
    runs = _sample_runs(cfg)
    if not inv and not runs:
        raise MissingArtifacts(f"no invert or sample runs under {root}")
    out = root / "report"
    tables = {}
    if inv:
        rows = []
        by_name = {p.name: json.loads((p / "stage.json").read_text())["summary"] for p in inv}
        for name in PRECONDS:
            if name in by_name:
                s = by_name[name]
                rows.append((name, s["iterations"], s["converged"]))
        _write_csv(out / "lbfgs_iterations.csv", ["precond", "iterations", "converged"], rows)
        tables["lbfgs_iterations"] = rows
    if runs:
        ess_rows = []
        oracle_std = root / "oracle" / "posterior_std.hpf"
        ref = hpf1.read_array(oracle_std) if oracle_std.is_file() else None
        err_rows = []
        for run in runs:
            s = json.loads((run / "stage.json").read_text())["summary"]
            ess_rows.append((run.name, *map(float, s["ess"])))
            if ref is not None:
                std = hpf1.read_array(run / "std.hpf")
                if std.shape == ref.shape:
                    err_rows.append((run.name, float(np.linalg.norm(std - ref) / np.linalg.norm(ref)),
                                     float(np.mean(std / ref))))
        n_pts = max(len(r) - 1 for r in ess_rows)
        _write_csv(out / "ess.csv", ["sampler"] + [f"x{i + 1}" for i in range(n_pts)], ess_rows)
        tables["ess"] = ess_rows
        if err_rows:
            _write_csv(out / "std_error.csv", ["sampler", "rel_l2_error", "mean_ratio"], err_rows)
            tables["std_error"] = err_rows
    return tables
