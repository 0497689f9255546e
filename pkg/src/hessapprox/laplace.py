"""Factored, SPD Laplace approximation of the posterior.

The approximate precision is ``H~ = M (I + U diag(d) U^T) M^T`` where ``M`` is
a square-root factor (a pseudo-differential operator, or the prior square
root) and ``(U, d)`` corrects the whitened residual
``inv_M H inv_M^T - I``. Samples are drawn as

    zeta = inv_M^T (z + U ((1 + d)^(-1/2) - 1) U^T z)

with ``z`` white noise. When ``inv_M`` is only an approximate inverse, the
distribution that is actually sampled has precision ``(G G^T)^-1`` with ``G``
the sampling map above; :meth:`LaplaceApproximation.quad_form` evaluates that
precision so proposal and acceptance always refer to the same Gaussian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import hpf1, kernels
from .errors import CGNoConvergence, TooLarge
from .grid import Grid2D
from .lowrank import GenEigPairs, randomized_symmetric_eig
from .prior import BiharmonicPrior
from .psido import (DENSE_LIMIT, LinearOperator2D, LowRankSymbol, dense_materialize, multiplier_operator,
                    psido_apply, psido_apply_adjoint)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# conjugate gradients


@dataclass
class CGResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    rel_residual: float


def conjugate_gradient(apply_A, b: np.ndarray, grid: Grid2D, tol: float = 1e-10,
                       max_iter: int = 500, precond=None, x0=None) -> CGResult:
    """(P)CG for an operator SPD in the area-weighted inner product."""
    inner = grid.inner
    bnorm = grid.norm(b)
    x = np.zeros(grid.shape) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else np.array(b, dtype=float)
    if bnorm == 0:
        return CGResult(x, r, 0, 0.0)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = inner(r, z)
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            raise CGNoConvergence(f"operator not positive definite (p^T A p = {pAp:.3e})")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rel = grid.norm(r) / bnorm
        if rel <= tol:
            return CGResult(x, r, it, rel)
        z = precond(r) if precond is not None else r
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CGNoConvergence(f"CG did not reach {tol:g} in {max_iter} iterations (rel. residual {rel:.3e})")


# --------------------------------------------------------------------------
# square-root factors


@dataclass(frozen=True, eq=False)
class Factor:
    """A linear map with its adjoint; ``symbol`` is kept for persistence."""

    op: LinearOperator2D
    symbol: LowRankSymbol | None = None
    multiplier: np.ndarray | None = None

    def apply(self, v):
        return self.op.apply(v)

    def apply_adjoint(self, v):
        return self.op.apply_adjoint(v)


def symbol_factor(sym: LowRankSymbol) -> Factor:
    op = LinearOperator2D(sym.grid, lambda v: psido_apply(sym, v),
                          lambda v: psido_apply_adjoint(sym, v), name="psido")
    return Factor(op, symbol=sym)


def multiplier_factor(grid: Grid2D, mult: np.ndarray) -> Factor:
    return Factor(multiplier_operator(grid, mult), multiplier=np.asarray(mult, dtype=float))


def _compress(rows: np.ndarray, nodes_z, nodes_x, grid: Grid2D, rank_tol: float) -> LowRankSymbol:
    """Interpolate sampled rows bilinearly in space and truncate by SVD."""
    U, s, Vt = np.linalg.svd(rows, full_matrices=False)
    keep = max(1, int(np.sum(s > rank_tol * s[0]))) if s[0] > 0 else 1
    wz = kernels.hat_weights(np.asarray(nodes_z, float), np.arange(grid.nz, dtype=float))
    wx = kernels.hat_weights(np.asarray(nodes_x, float), np.arange(grid.nx, dtype=float))
    coef = (U[:, :keep] * s[:keep]).reshape(len(nodes_z), len(nodes_x), keep)
    a = np.einsum("iz,jx,ijk->kzx", wz, wx, coef)
    return LowRankSymbol(grid, a, Vt[:keep].reshape(keep, *grid.shape))


def _sample_nodes(n: int, stride: int) -> np.ndarray:
    nodes = np.arange(0, n, stride)
    if nodes[-1] != n - 1:
        nodes = np.append(nodes, n - 1)
    return nodes


def build_spd_factor(sym_sqrt: LowRankSymbol | None, prior: BiharmonicPrior | None,
                     stride: int = 2, rank_tol: float = 1e-4,
                     kind: str = "sqrt") -> tuple[Factor, Factor]:
    """Factor ``M`` with symbol ``sqrt(s^2 + (delta + gamma |xi|^2)^2)`` and its pointwise reciprocal.

    With ``kind="sqrt"``, ``sym_sqrt`` approximates the square root of the
    misfit Hessian symbol. With ``kind="direct"`` it approximates the symbol
    itself and ``s^2`` is replaced by ``max(Re s, 0)``.
    Both symbols are sampled at rows on a lattice of the given ``stride``,
    interpolated bilinearly in space and truncated at relative singular
    value ``rank_tol``. With no misfit symbol the factors are the exact
    prior square root and its inverse.
    """
    if kind not in ("sqrt", "direct"):
        raise ValueError(f"unknown symbol kind {kind!r}")
    if sym_sqrt is None:
        if prior is None:
            raise ValueError("need a symbol or a prior")
        p = prior.sqrt_symbol()
        return multiplier_factor(prior.grid, p), multiplier_factor(prior.grid, 1.0 / p)
    g = sym_sqrt.grid
    nz_nodes = _sample_nodes(g.nz, stride)
    nx_nodes = _sample_nodes(g.nx, stride)
    iz, ix = np.meshgrid(nz_nodes, nx_nodes, indexing="ij")
    idx = (iz * g.nx + ix).reshape(-1)
    A = sym_sqrt.a.reshape(sym_sqrt.rank, -1)[:, idx]
    rows = (A.T @ sym_sqrt.b.reshape(sym_sqrt.rank, -1)).real
    sq = rows ** 2 if kind == "sqrt" else np.maximum(rows, 0.0)
    if prior is not None:
        sq = sq + prior.sqrt_symbol().reshape(1, -1) ** 2
    s_M = np.sqrt(sq)
    if np.any(s_M <= 0):
        raise ValueError("combined square-root symbol must be strictly positive; supply a prior")
    M = _compress(s_M, nz_nodes, nx_nodes, g, rank_tol)
    inv_M = _compress(1.0 / s_M, nz_nodes, nx_nodes, g, rank_tol)
    return symbol_factor(M), symbol_factor(inv_M)


# --------------------------------------------------------------------------
# Laplace approximation


@dataclass(eq=False)
class LaplaceApproximation:
    grid: Grid2D
    m_map: np.ndarray
    M: Factor
    inv_M: Factor
    U: np.ndarray                 # (k, nz, nx), orthonormal
    d: np.ndarray                 # (k,), all > -1
    exact_inverse: bool = False   # inv_M is the exact inverse of M
    cg_tol: float = 1e-10
    cg_max_iter: int = 500
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float).reshape(-1, *self.grid.shape)
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        if self.U.shape[0] != self.d.shape[0]:
            raise ValueError("U and d sizes differ")
        if np.any(self.d <= -1.0):
            raise ValueError("correction eigenvalues must exceed -1")
        self.cg_iterations = 0
        self._dense = None

    @property
    def rank(self) -> int:
        return len(self.d)

    def _uc(self, v):
        return np.tensordot(self.U, v, axes=([1, 2], [0, 1])) * self.grid.cell_area

    def _ucomb(self, c):
        return np.tensordot(c, self.U, axes=(0, 0)) if self.rank else np.zeros(self.grid.shape)

    def _K(self, v, power: float):
        """``(I + U diag(d) U^T)^power v``."""
        if self.rank == 0:
            return np.array(v, dtype=float)
        return v + self._ucomb(((1.0 + self.d) ** power - 1.0) * self._uc(v))

    def densify(self) -> "LaplaceApproximation":
        """Materialise the sampling map and its inverse (small grids only).

        Afterwards :meth:`sampling_map`, :meth:`covariance_apply` and
        :meth:`quad_form` use dense products and no CG is needed.
        """
        g = self.grid
        if g.size > DENSE_LIMIT:
            raise TooLarge(f"N={g.size} exceeds dense limit {DENSE_LIMIT}")
        self._dense = None
        G = dense_materialize(self.sampling_map, g)
        self._dense = (G, np.linalg.inv(G))
        return self

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    # maps ---------------------------------------------------------------
    def precision_apply(self, v):
        """``M (I + U D U^T) M^T v`` (the factored precision)."""
        return self.M.apply(self._K(self.M.apply_adjoint(v), 1.0))

    def sampling_map(self, z):
        """``G z = inv_M^T (I + U D U^T)^(-1/2) z``."""
        if self.is_dense:
            return (self._dense[0] @ z.reshape(-1)).reshape(self.grid.shape)
        return self.inv_M.apply_adjoint(self._K(z, -0.5))

    def covariance_apply(self, v):
        """``G G^T v``, the covariance of :meth:`sample`."""
        if self.is_dense:
            G = self._dense[0]
            return (G @ (G.T @ v.reshape(-1))).reshape(self.grid.shape)
        return self.inv_M.apply_adjoint(self._K(self.inv_M.apply(v), -1.0))

    def inverse_hessian_apply(self, v, corrected: bool = False):
        """Cheap inverse of the precision, ``inv_M^T inv_M`` (optionally with the correction)."""
        if corrected:
            return self.covariance_apply(v)
        return self.inv_M.apply_adjoint(self.inv_M.apply(v))

    def draw_white(self, rng) -> np.ndarray:
        return rng.standard_normal(self.grid.shape) / np.sqrt(self.grid.cell_area)

    def sample(self, rng=None, z=None) -> np.ndarray:
        """Zero-mean draw ``zeta = G z``."""
        if z is None:
            z = self.draw_white(np.random.default_rng(rng))
        return self.sampling_map(z)

    def quad_form(self, v: np.ndarray) -> float:
        """``0.5 <v, (G G^T)^-1 v>`` under the exact precision of the sampler."""
        g = self.grid
        if not np.any(v):
            return 0.0
        if self.is_dense:
            w = self._dense[1] @ v.reshape(-1)
            return 0.5 * g.cell_area * float(w @ w)
        if self.exact_inverse:
            w = self._K(self.M.apply_adjoint(v), 0.5)
            return 0.5 * g.inner(w, w)
        res = conjugate_gradient(self.covariance_apply, v, g, self.cg_tol, self.cg_max_iter,
                                 precond=self.precision_apply)
        self.cg_iterations += res.iterations
        # stationary form: error is quadratic in the solve error
        return 0.5 * (g.inner(res.x, v) + g.inner(res.x, res.residual))

    # persistence ----------------------------------------------------------
    def save(self, directory, extra: dict | None = None):
        g = self.grid
        arrays = {"m_map": self.m_map, "d": self.d}
        for i in range(self.rank):
            arrays[f"u{i:04d}"] = self.U[i]
        man = {"kind": "LaplaceApproximation", "rank": self.rank, "nx": g.nx, "nz": g.nz,
               "dx": g.dx, "dz": g.dz, "exact_inverse": self.exact_inverse}
        for name, f in (("M", self.M), ("invM", self.inv_M)):
            if f.symbol is not None:
                man[f"{name}_rank"] = f.symbol.rank
                for k in range(f.symbol.rank):
                    arrays[f"{name}_a{k:04d}"] = f.symbol.a[k]
                    arrays[f"{name}_b{k:04d}"] = f.symbol.b[k]
            else:
                arrays[f"{name}_mult"] = f.multiplier
        man.update(self.info)
        man.update(extra or {})
        return hpf1.write_bundle(directory, arrays, man)

    @classmethod
    def load(cls, directory) -> "LaplaceApproximation":
        arrays, man = hpf1.read_bundle(directory)
        g = Grid2D(man["nx"], man["nz"], man["dx"], man["dz"])
        facs = []
        for name in ("M", "invM"):
            if f"{name}_mult" in arrays:
                facs.append(multiplier_factor(g, arrays[f"{name}_mult"]))
            else:
                r = man[f"{name}_rank"]
                a = np.stack([arrays[f"{name}_a{k:04d}"] for k in range(r)])
                b = np.stack([arrays[f"{name}_b{k:04d}"] for k in range(r)])
                facs.append(symbol_factor(LowRankSymbol(g, a, b)))
        r = man["rank"]
        U = np.stack([arrays[f"u{i:04d}"] for i in range(r)]) if r else np.zeros((0,) + g.shape)
        return cls(g, arrays["m_map"], facs[0], facs[1], U, np.atleast_1d(arrays["d"])[:r],
                   exact_inverse=man["exact_inverse"])


def build_correction(H_full, M: Factor, inv_M: Factor, k: int, rng_seed=None,
                     oversample: int = 10, power_iters: int = 2,
                     grid: Grid2D | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Leading-``k`` (by magnitude) eigenpairs of ``inv_M H inv_M^T - I``."""
    grid = grid if grid is not None else inv_M.op.grid
    if k <= 0:
        return np.zeros((0,) + grid.shape), np.zeros(0)

    def residual(v):
        return inv_M.apply(H_full(inv_M.apply_adjoint(v))) - v

    d, U = randomized_symmetric_eig(residual, grid, k, oversample, power_iters, rng_seed,
                                    by_magnitude=True)
    return U, np.maximum(d, -1.0 + 1e-6)


def build_laplace(H_full, m_map: np.ndarray, M: Factor, inv_M: Factor, k: int = 30,
                  rng_seed=None, exact_inverse: bool = False, **kw) -> LaplaceApproximation:
    U, d = build_correction(H_full, M, inv_M, k, rng_seed, grid=inv_M.op.grid, **kw)
    return LaplaceApproximation(inv_M.op.grid, m_map, M, inv_M, U, d, exact_inverse=exact_inverse)


def lowrank_laplace(pairs: GenEigPairs, prior: BiharmonicPrior, m_map: np.ndarray) -> LaplaceApproximation:
    """Low-rank Laplace approximation in factored form.

    ``M = R^1/2``, ``U = R^1/2 V`` and ``d = lam``, which reproduces
    ``R + R V Lam V^T R`` and the sampler ``(I - V S V^T R) z``.
    """
    g = prior.grid
    M, inv_M = build_spd_factor(None, prior)
    U = np.stack([prior.apply_power(v, 0.5) for v in pairs.vectors]) if pairs.rank else np.zeros((0,) + g.shape)
    return LaplaceApproximation(g, m_map, M, inv_M, U, np.asarray(pairs.eigenvalues, float),
                                exact_inverse=True)


def laplace_sample(L: LaplaceApproximation, rng_seed=None) -> np.ndarray:
    return L.sample(rng_seed)


def quad_form(L: LaplaceApproximation, v: np.ndarray) -> float:
    return L.quad_form(v)
