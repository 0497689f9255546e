"""pCN and gpCN samplers with chain diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import TraceTooShort
from .grid import Grid2D

log = logging.getLogger(__name__)

MIN_TRACE = 100
BETA_MAX = 0.99


def default_probe_points(grid: Grid2D) -> list[tuple[int, int]]:
    """Five points at mixed depths: two shallow, one central, two deep."""
    fr = [(0.3, 0.25), (0.3, 0.75), (0.5, 0.5), (0.7, 0.3), (0.7, 0.7)]
    return [(int(round(z * (grid.nz - 1))), int(round(x * (grid.nx - 1)))) for z, x in fr]


@dataclass(frozen=True)
class ChainConfig:
    beta: float
    n_samples: int
    burn_in: int | None = None
    seed: int | None = 0
    probe_points: tuple | None = None
    thin: int = 10

    def __post_init__(self):
        if not (0 < self.beta < 1):
            raise ValueError("beta must lie in (0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if self.burn_in is not None and not (0 <= self.burn_in < self.n_samples):
            raise ValueError("burn_in must lie in [0, n_samples)")

    @property
    def burn(self) -> int:
        return self.n_samples // 10 if self.burn_in is None else self.burn_in


@dataclass(eq=False)
class Chain:
    config: ChainConfig
    probe_points: list
    probe_traces: np.ndarray        # (P, n_samples)
    samples: np.ndarray             # thinned post-burn-in states
    accepted: int
    mean: np.ndarray                # post-burn-in running mean
    std: np.ndarray                 # post-burn-in unbiased std
    n_stats: int
    delta_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.config.n_samples


class _Welford:
    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def push(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def std(self):
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1))


def _run(grid: Grid2D, cfg: ChainConfig, start: np.ndarray, potential, propose,
         record_delta: bool = False) -> Chain:
    """Generic Metropolis loop; ``propose(m, rng)`` returns the candidate and
    ``potential(m)`` the quantity whose difference sets the acceptance."""
    rng = np.random.default_rng(cfg.seed)
    pts = list(cfg.probe_points) if cfg.probe_points is not None else default_probe_points(grid)
    pz = np.array([p[0] for p in pts], dtype=int)
    px = np.array([p[1] for p in pts], dtype=int)
    traces = np.empty((len(pts), cfg.n_samples))
    deltas = np.empty(cfg.n_samples) if record_delta else np.zeros(0)
    kept = []
    acc = 0
    stats = _Welford(grid.shape)
    m = np.array(start, dtype=float)
    pot = potential(m)
    for i in range(cfg.n_samples):
        cand = propose(m, rng)
        pot_c = potential(cand)
        log_a = pot - pot_c
        if log_a >= 0 or rng.random() < np.exp(log_a):
            m, pot = cand, pot_c
            acc += 1
        traces[:, i] = m[pz, px]
        if record_delta:
            deltas[i] = pot
        if i >= cfg.burn:
            stats.push(m)
            if (i - cfg.burn) % cfg.thin == 0:
                kept.append(m.copy())
    samples = np.array(kept) if kept else np.zeros((0,) + grid.shape)
    return Chain(cfg, pts, traces, samples, acc, stats.mean.copy(), stats.std(), stats.n, deltas)


def run_gpcn(problem, L, cfg: ChainConfig, record_delta: bool = False) -> Chain:
    """gpCN with the Laplace approximation ``L`` as reference Gaussian.

    Proposal ``m' = m_map + sqrt(1 - beta^2)(m - m_map) + beta zeta`` with
    ``zeta = G z``; acceptance ``min(1, exp(Delta(m) - Delta(m')))`` where
    ``Delta(m) = Phi(m) - 0.5 ||m - m_map||^2`` in the sampler's precision.
    The chain starts at ``m_map``.
    """
    grid = L.grid
    a = np.sqrt(1.0 - cfg.beta ** 2)
    b = cfg.beta
    area = grid.cell_area

    rng = np.random.default_rng(cfg.seed)
    pts = list(cfg.probe_points) if cfg.probe_points is not None else default_probe_points(grid)
    pz = np.array([p[0] for p in pts], dtype=int)
    px = np.array([p[1] for p in pts], dtype=int)
    traces = np.empty((len(pts), cfg.n_samples))
    deltas = np.empty(cfg.n_samples) if record_delta else np.zeros(0)
    kept = []
    acc = 0
    stats = _Welford(grid.shape)
    m = np.array(L.m_map, dtype=float)
    u = np.zeros(grid.shape)
    delta = problem.objective(m)
    for i in range(cfg.n_samples):
        z = L.draw_white(rng)
        u_c = a * u + b * z
        m_c = L.m_map + a * (m - L.m_map) + b * L.sampling_map(z)
        delta_c = problem.objective(m_c) - 0.5 * area * float(np.sum(u_c * u_c))
        log_a = delta - delta_c
        if log_a >= 0 or rng.random() < np.exp(log_a):
            m, u, delta = m_c, u_c, delta_c
            acc += 1
        traces[:, i] = m[pz, px]
        if record_delta:
            deltas[i] = delta
        if i >= cfg.burn:
            stats.push(m)
            if (i - cfg.burn) % cfg.thin == 0:
                kept.append(m.copy())
    samples = np.array(kept) if kept else np.zeros((0,) + grid.shape)
    return Chain(cfg, pts, traces, samples, acc, stats.mean.copy(), stats.std(), stats.n, deltas)


def run_pcn(problem, prior, cfg: ChainConfig, start: np.ndarray | None = None,
            record_delta: bool = False) -> Chain:
    """pCN: prior-reversible proposal, misfit-only acceptance.

    Starts at ``start`` (the prior mean by default).
    """
    grid = prior.grid
    a = np.sqrt(1.0 - cfg.beta ** 2)
    b = cfg.beta
    mpr = prior.mean_field

    def propose(m, rng):
        zeta = prior.apply_power(rng.standard_normal(grid.shape) / np.sqrt(grid.cell_area), -0.5)
        return mpr + a * (m - mpr) + b * zeta

    m0 = mpr if start is None else start
    return _run(grid, cfg, m0, problem.misfit, propose, record_delta)


def tune_beta(run, target: tuple[float, float] = (0.2, 0.4), pilot: int = 500,
              beta0: float = 0.2, max_rounds: int = 12, seed=0) -> tuple[float, float]:
    """Pick ``beta`` by short pilot chains so acceptance lands in ``target``.

    ``run(beta, n, seed)`` must return a :class:`Chain`. Steps by factors of
    four until the target is bracketed, then bisects on ``log(beta)``.
    Returns ``(beta, pilot_acceptance)``; if no pilot lands in the target the
    closest one is returned.
    """
    lo, hi = 0.0, BETA_MAX
    beta = beta0
    mid = 0.5 * (target[0] + target[1])
    best = (beta, -1.0)
    for _ in range(max_rounds):
        rate = run(beta, pilot, seed).acceptance_rate
        if abs(rate - mid) < abs(best[1] - mid):
            best = (beta, rate)
        if target[0] <= rate <= target[1]:
            return beta, rate
        if rate < target[0]:
            hi = beta
        else:
            if beta >= BETA_MAX:
                return beta, rate
            lo = beta
        if lo == 0.0:
            beta = 0.25 * hi
        elif hi == BETA_MAX:
            beta = min(BETA_MAX, 4.0 * lo)
        else:
            beta = float(np.sqrt(lo * hi))
    return best


# --------------------------------------------------------------------------
# diagnostics


def autocorrelation(trace: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation ``rho_k`` for lags ``0..n-1`` via FFT."""
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < MIN_TRACE:
        raise TraceTooShort(f"trace length {n} < {MIN_TRACE}")
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    if acov[0] <= 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acov / acov[0]


def ess(trace: np.ndarray) -> float:
    """Effective sample size ``n / tau`` with Geyer's initial positive sequence.

    A constant trace has ESS 1 by convention.
    """
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < MIN_TRACE:
        raise TraceTooShort(f"trace length {n} < {MIN_TRACE}")
    if np.all(x == x[0]):
        return 1.0
    tau = kernels.geyer_tau(autocorrelation(x))
    tau = max(tau, 1.0 / n)
    return float(min(n / tau, n))


def chain_statistics(chain: Chain) -> dict:
    """Mean and std fields plus Freedman–Diaconis histograms at the probe points."""
    if chain.n_stats < MIN_TRACE:
        raise TraceTooShort(f"only {chain.n_stats} post-burn-in states")
    burn = chain.config.burn
    hists = []
    for tr in chain.probe_traces:
        post = tr[burn:]
        if np.ptp(post) == 0:
            hists.append((np.array([post.size]), np.array([post[0] - 0.5, post[0] + 0.5])))
        else:
            hists.append(np.histogram(post, bins="fd"))
    return {"mean": chain.mean, "std": chain.std, "histograms": hists,
            "ess": [ess(tr[burn:]) for tr in chain.probe_traces],
            "acceptance_rate": chain.acceptance_rate}
