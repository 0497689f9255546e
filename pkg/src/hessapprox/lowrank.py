"""Prior-preconditioned low-rank Hessian and posterior formulas.

The leading pairs of ``H_d v = lam R v`` give

    (H_d + R)^-1 ~= R^-1 - V D V^T,        D = diag(lam / (lam + 1))

and samples from that Gaussian as ``(I - V S V^T R) z`` with
``S = I - (Lam + I)^(-1/2)`` and ``z ~ N(0, R^-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hpf1
from .grid import Grid2D
from .prior import BiharmonicPrior


@dataclass(frozen=True, eq=False)
class GenEigPairs:
    grid: Grid2D
    eigenvalues: np.ndarray   # descending, clipped at 0
    vectors: np.ndarray       # (r, nz, nx), R-orthonormal

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def truncate(self, r: int) -> "GenEigPairs":
        return GenEigPairs(self.grid, self.eigenvalues[:r], self.vectors[:r])

    def save(self, directory, extra: dict | None = None):
        g = self.grid
        arrays = {"eigenvalues": np.asarray(self.eigenvalues, dtype=float)}
        for i in range(self.rank):
            arrays[f"v{i:04d}"] = self.vectors[i]
        man = {"kind": "GenEigPairs", "rank": self.rank, "nx": g.nx, "nz": g.nz, "dx": g.dx, "dz": g.dz}
        man.update(extra or {})
        return hpf1.write_bundle(directory, arrays, man)

    @classmethod
    def load(cls, directory) -> "GenEigPairs":
        arrays, man = hpf1.read_bundle(directory)
        g = Grid2D(man["nx"], man["nz"], man["dx"], man["dz"])
        r = man["rank"]
        vecs = np.stack([arrays[f"v{i:04d}"] for i in range(r)]) if r else np.zeros((0,) + g.shape)
        return cls(g, np.atleast_1d(arrays["eigenvalues"]), vecs)


def _orth(Y: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(Y)
    return q


def randomized_symmetric_eig(apply, grid: Grid2D, k: int, oversample: int = 10,
                             power_iters: int = 2, rng=None, by_magnitude: bool = False):
    """Leading ``k`` eigenpairs of an operator symmetric in the area-weighted product.

    ``apply`` maps a ``(nz, nx)`` field to a field. Works on scaled flat
    vectors ``sqrt(area) * f`` so that plain QR gives weighted orthonormality.
    Returns ``(values, fields)`` sorted by value (or by magnitude).
    """
    rng = np.random.default_rng(rng)
    n = grid.size
    s = np.sqrt(grid.cell_area)
    ell = min(k + oversample, n)

    def block(Y):
        out = np.empty_like(Y)
        for j in range(Y.shape[1]):
            out[:, j] = apply((Y[:, j] / s).reshape(grid.shape)).reshape(-1) * s
        return out

    Q = _orth(block(rng.standard_normal((n, ell))))
    for _ in range(power_iters):
        Q = _orth(block(Q))
    AQ = block(Q)
    T = Q.T @ AQ
    T = 0.5 * (T + T.T)
    vals, Z = np.linalg.eigh(T)
    order = np.argsort(-np.abs(vals) if by_magnitude else -vals, kind="stable")[:k]
    vals = vals[order]
    U = Q @ Z[:, order]
    return vals, (U.T / s).reshape(len(vals), *grid.shape)


def randomized_gen_eig(Hd, prior: BiharmonicPrior, r: int, oversample: int = 10,
                       power_iters: int = 2, rng_seed=None) -> GenEigPairs:
    """Leading ``r`` pairs of ``H_d v = lam R v``.

    Solved through the whitened operator ``R^-1/2 H_d R^-1/2``, whose
    eigenvectors map back with ``v = R^-1/2 u``; prior powers are exact
    Fourier multipliers, so this equals the R-inner-product formulation.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    g = prior.grid

    def whitened(u):
        return prior.apply_power(Hd(prior.apply_power(u, -0.5)), -0.5)

    vals, U = randomized_symmetric_eig(whitened, g, r, oversample, power_iters, rng_seed)
    vals = np.maximum(vals, 0.0)
    V = np.stack([prior.apply_power(u, -0.5) for u in U])
    return GenEigPairs(g, vals, V)


def _coeffs(grid: Grid2D, V: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.tensordot(V, v, axes=([1, 2], [0, 1])) * grid.cell_area


def lowrank_posterior_apply_inverse(pairs: GenEigPairs, prior: BiharmonicPrior, v: np.ndarray) -> np.ndarray:
    """``(R + R V Lam V^T R)^-1 v = R^-1 v - V D V^T v``."""
    out = prior.apply_covariance(v)
    if pairs.rank == 0:
        return out
    lam = pairs.eigenvalues
    d = lam / (lam + 1.0)
    return out - np.tensordot(d * _coeffs(prior.grid, pairs.vectors, v), pairs.vectors, axes=(0, 0))


def lowrank_hessian_apply(pairs: GenEigPairs, prior: BiharmonicPrior, v: np.ndarray) -> np.ndarray:
    """``R V Lam V^T R v`` (the low-rank misfit Hessian)."""
    if pairs.rank == 0:
        return np.zeros(prior.grid.shape)
    Rv = prior.apply_precision(v)
    RV = np.tensordot(pairs.eigenvalues * _coeffs(prior.grid, pairs.vectors, Rv), pairs.vectors, axes=(0, 0))
    return prior.apply_precision(RV)


def lowrank_sample_from(pairs: GenEigPairs, prior: BiharmonicPrior, z: np.ndarray) -> np.ndarray:
    """``(I - V S V^T R) z`` for a given zero-mean prior draw ``z``.

    ``z`` may be a stack of draws along leading axes.
    """
    if pairs.rank == 0:
        return np.array(z, dtype=float)
    S = 1.0 - 1.0 / np.sqrt(pairs.eigenvalues + 1.0)
    V = pairs.vectors
    c = np.einsum("kij,...ij->...k", V, prior.apply_precision(z)) * prior.grid.cell_area
    return z - np.einsum("...k,kij->...ij", S * c, V)


def lowrank_sample(pairs: GenEigPairs, prior: BiharmonicPrior, rng_seed=None) -> np.ndarray:
    """Zero-mean draw from ``N(0, (H_d_lr + R)^-1)``."""
    rng = np.random.default_rng(rng_seed)
    z = prior.apply_power(rng.standard_normal(prior.grid.shape) / np.sqrt(prior.grid.cell_area), -0.5)
    return lowrank_sample_from(pairs, prior, z)
