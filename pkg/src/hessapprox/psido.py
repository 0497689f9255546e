"""Pseudo-differential operators with separated (low-rank) symbols.

An operator with symbol ``s(x, xi) = sum_k a_k(x) b_k(xi)`` acts as::

    H v = sum_k a_k * F^-1( b_k * F v )

which costs one forward transform and ``r`` inverse transforms. Its adjoint
in the area-weighted inner product is ``sum_k F^-1( conj(b_k) * F(conj(a_k) v) )``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hpf1
from .errors import IndexOutOfRange, TooLarge
from .grid import Grid2D, forward_transform, inverse_transform

DENSE_LIMIT = 4096


class LinearOperator2D:
    """Matrix-free linear map between fields on one grid.

    ``matvec`` must be linear; ``rmatvec`` is its adjoint in the area-weighted
    inner product (defaults to ``matvec`` when ``symmetric`` is set).
    """

    def __init__(self, grid: Grid2D, matvec: Callable, rmatvec: Callable | None = None,
                 symmetric: bool = False, name: str = ""):
        self.grid = grid
        self._matvec = matvec
        self.symmetric = symmetric
        self._rmatvec = matvec if (symmetric and rmatvec is None) else rmatvec
        self.name = name
        self.ncalls = 0

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def apply(self, v: np.ndarray) -> np.ndarray:
        self.grid.check(v)
        self.ncalls += 1
        return self._matvec(v)

    def apply_adjoint(self, v: np.ndarray) -> np.ndarray:
        if self._rmatvec is None:
            raise NotImplementedError(f"operator {self.name!r} has no adjoint")
        self.grid.check(v)
        return self._rmatvec(v)

    @property
    def T(self) -> "LinearOperator2D":
        if self.symmetric:
            return self
        return LinearOperator2D(self.grid, self.apply_adjoint, self.apply,
                                name=f"{self.name}^T")

    def __add__(self, other: "LinearOperator2D") -> "LinearOperator2D":
        adj = None
        if self._rmatvec is not None and other._rmatvec is not None:
            adj = lambda v: self.apply_adjoint(v) + other.apply_adjoint(v)  # noqa: E731
        return LinearOperator2D(self.grid, lambda v: self.apply(v) + other.apply(v), adj,
                                symmetric=self.symmetric and other.symmetric,
                                name=f"({self.name}+{other.name})")

    def __matmul__(self, other: "LinearOperator2D") -> "LinearOperator2D":
        adj = None
        if self._rmatvec is not None and other._rmatvec is not None:
            adj = lambda v: other.apply_adjoint(self.apply_adjoint(v))  # noqa: E731
        return LinearOperator2D(self.grid, lambda v: self.apply(other.apply(v)), adj,
                                name=f"{self.name}@{other.name}")

    def scaled(self, c: float) -> "LinearOperator2D":
        adj = None if self._rmatvec is None else (lambda v: c * self.apply_adjoint(v))
        return LinearOperator2D(self.grid, lambda v: c * self.apply(v), adj,
                                symmetric=self.symmetric, name=f"{c:g}*{self.name}")

    def symmetrized(self) -> "LinearOperator2D":
        return LinearOperator2D(self.grid, lambda v: 0.5 * (self.apply(v) + self.apply_adjoint(v)),
                                symmetric=True, name=f"sym({self.name})")


def identity_operator(grid: Grid2D) -> LinearOperator2D:
    return LinearOperator2D(grid, lambda v: np.array(v, dtype=float), symmetric=True, name="I")


def multiplier_operator(grid: Grid2D, symbol: np.ndarray, name: str = "mult") -> LinearOperator2D:
    """Fourier multiplier ``v -> F^-1(symbol * F v)`` for a real symbol even in ``xi``."""
    def mv(v):
        return inverse_transform(symbol * forward_transform(v, grid), grid, real=False).real
    return LinearOperator2D(grid, mv, symmetric=True, name=name)


def diagonal_operator(grid: Grid2D, d: np.ndarray, name: str = "diag") -> LinearOperator2D:
    d = grid.check(np.asarray(d, dtype=float))
    return LinearOperator2D(grid, lambda v: d * v, symmetric=True, name=name)


@dataclass(frozen=True, eq=False)
class LowRankSymbol:
    """Separated symbol with spatial factors ``a`` and frequency factors ``b``.

    ``a`` and ``b`` are ``(r, nz, nx)`` arrays; ``b`` is on the DFT index
    layout of ``grid``.
    """

    grid: Grid2D
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a)
        b = np.asarray(self.b, dtype=complex)
        if a.ndim == 2:
            a = a[None]
        if b.ndim == 2:
            b = b[None]
        if a.shape != b.shape or a.shape[1:] != self.grid.shape:
            raise ValueError(f"factor shapes {a.shape} / {b.shape} do not match grid {self.grid.shape}")
        if a.shape[0] < 1:
            raise ValueError("rank must be at least 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("symbol factors must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def rank(self) -> int:
        return self.a.shape[0]

    @classmethod
    def identity(cls, grid: Grid2D) -> "LowRankSymbol":
        return cls(grid, np.ones((1,) + grid.shape), np.ones((1,) + grid.shape, dtype=complex))

    @classmethod
    def multiplier(cls, grid: Grid2D, b: np.ndarray) -> "LowRankSymbol":
        return cls(grid, np.ones((1,) + grid.shape), np.asarray(b)[None])

    def evaluate(self, x_index, xi_index) -> complex:
        """``s`` at flat spatial index and flat frequency index."""
        A = self.a.reshape(self.rank, -1)
        B = self.b.reshape(self.rank, -1)
        return complex(A[:, x_index] @ B[:, xi_index])

    def to_dense_symbol(self) -> np.ndarray:
        """Full ``N x N`` symbol matrix (rows: space, columns: frequency)."""
        n = self.grid.size
        if n > DENSE_LIMIT:
            raise TooLarge(f"N={n} exceeds dense limit {DENSE_LIMIT}")
        return self.a.reshape(self.rank, -1).T @ self.b.reshape(self.rank, -1)

    def save(self, directory, extra: dict | None = None):
        g = self.grid
        manifest = {"kind": "LowRankSymbol", "rank": self.rank, "nx": g.nx, "nz": g.nz,
                    "dx": g.dx, "dz": g.dz}
        if extra:
            manifest.update(extra)
        arrays = {}
        for k in range(self.rank):
            arrays[f"a{k:04d}"] = self.a[k]
            arrays[f"b{k:04d}"] = self.b[k]
        return hpf1.write_bundle(directory, arrays, manifest)

    @classmethod
    def load(cls, directory) -> "LowRankSymbol":
        arrays, man = hpf1.read_bundle(directory)
        g = Grid2D(man["nx"], man["nz"], man["dx"], man["dz"])
        r = man["rank"]
        a = np.stack([arrays[f"a{k:04d}"] for k in range(r)])
        b = np.stack([arrays[f"b{k:04d}"] for k in range(r)])
        return cls(g, a, b)


def psido_apply(sym: LowRankSymbol, v: np.ndarray) -> np.ndarray:
    g = sym.grid
    g.check(v, "input")
    vh = forward_transform(v, g)
    parts = inverse_transform(sym.b * vh[None], g, real=False)
    return np.einsum("kij,kij->ij", sym.a, parts).real


def psido_apply_adjoint(sym: LowRankSymbol, v: np.ndarray) -> np.ndarray:
    g = sym.grid
    g.check(v, "input")
    vh = forward_transform(np.conj(sym.a) * v[None], g)
    acc = np.einsum("kij,kij->ij", np.conj(sym.b), vh)
    return inverse_transform(acc, g, real=False).real


def psido_apply_symmetric(sym: LowRankSymbol, v: np.ndarray) -> np.ndarray:
    return 0.5 * (psido_apply(sym, v) + psido_apply_adjoint(sym, v))


def _as_flat_indices(grid: Grid2D, points) -> np.ndarray:
    pts = np.asarray(points)
    if pts.ndim == 2 and pts.shape[1] == 2:
        iz, ix = pts[:, 0], pts[:, 1]
        if np.any((iz < 0) | (iz >= grid.nz) | (ix < 0) | (ix >= grid.nx)):
            raise IndexOutOfRange("point outside grid")
        return (iz * grid.nx + ix).astype(np.int64)
    flat = pts.reshape(-1).astype(np.int64)
    if np.any((flat < 0) | (flat >= grid.size)):
        raise IndexOutOfRange("index outside grid")
    return flat


def eval_symbol_rows(sym: LowRankSymbol, points) -> np.ndarray:
    """Rows ``s(x_i, .)`` as a ``(len(points), N)`` complex matrix.

    ``points`` is a list of flat indices or of ``(iz, ix)`` pairs.
    """
    idx = _as_flat_indices(sym.grid, points)
    A = sym.a.reshape(sym.rank, -1)[:, idx]
    return A.T @ sym.b.reshape(sym.rank, -1)


def eval_symbol_cols(sym: LowRankSymbol, freqs) -> np.ndarray:
    """Columns ``s(., xi_j)`` as an ``(N, len(freqs))`` complex matrix.

    ``freqs`` is a list of flat DFT indices or of ``(iz, ix)`` index pairs.
    """
    idx = _as_flat_indices(sym.grid, freqs)
    B = sym.b.reshape(sym.rank, -1)[:, idx]
    return sym.a.reshape(sym.rank, -1).T @ B


def as_operator(sym: LowRankSymbol, mode: str = "apply") -> LinearOperator2D:
    """Wrap a symbol as an operator; ``mode`` is ``"apply"`` or ``"symmetric"``."""
    if mode == "symmetric":
        return LinearOperator2D(sym.grid, lambda v: psido_apply_symmetric(sym, v),
                                symmetric=True, name="psido_sym")
    if mode != "apply":
        raise ValueError(f"unknown mode {mode!r}")
    return LinearOperator2D(sym.grid, lambda v: psido_apply(sym, v),
                            lambda v: psido_apply_adjoint(sym, v), name="psido")


def dense_materialize(op, grid: Grid2D | None = None) -> np.ndarray:
    """Dense ``N x N`` matrix whose column ``j`` is ``op(e_j)`` (flat z-major order)."""
    if grid is None:
        grid = op.grid
    n = grid.size
    if n > DENSE_LIMIT:
        raise TooLarge(f"N={n} exceeds dense limit {DENSE_LIMIT}")
    out = np.empty((n, n))
    e = np.zeros(grid.shape)
    for j in range(n):
        e.flat[j] = 1.0
        out[:, j] = np.asarray(op(e)).reshape(-1)
        e.flat[j] = 0.0
    return out
