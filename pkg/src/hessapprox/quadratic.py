"""Idealised quadratic inverse problem with a known Gaussian posterior.

The misfit Hessian is ``H_d = A A^T + V diag(lam) V^T`` where ``A`` is an
order-1/2 pseudo-differential operator with the rank-3 symbol

    s_A(x, xi) = w(x) P(|xi|) (0.1 + cos^2(arg xi + pi x / x_max)) / (0.1 + (z / z_max)^2)

and ``V`` holds smooth, surface-concentrated, low-frequency modes. The
objective is ``Phi(m) = Phi_d(W m) + 0.5 ||m - m_pr||_R^2`` with the
quadratic misfit ``Phi_d(u) = 0.5 <u, H_d u> - <b, u> + 0.5 <b, m*>`` and
``b = H_d m*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import hpf1
from .errors import TooLarge
from .grid import Grid2D, forward_transform, inverse_transform
from .prior import BiharmonicPrior, matern_parameters
from .psido import (DENSE_LIMIT, LinearOperator2D, LowRankSymbol, dense_materialize,
                    diagonal_operator, psido_apply, psido_apply_adjoint)


class ObjectiveProblem(Protocol):
    """What the optimiser and samplers need from a problem."""

    grid: Grid2D
    prior: BiharmonicPrior

    def objective(self, m: np.ndarray) -> float: ...

    def gradient(self, m: np.ndarray) -> np.ndarray: ...

    def misfit(self, m: np.ndarray) -> float: ...


def tukey_taper(n: int, lo_frac: float, hi_frac: float) -> np.ndarray:
    """Raised-cosine taper on ``n`` points, zero at both ends, flat in the middle."""
    u = np.linspace(0.0, 1.0, n)
    t = np.ones(n)
    if lo_frac > 0:
        m = u < lo_frac
        t[m] = 0.5 * (1.0 - np.cos(np.pi * u[m] / lo_frac))
    if hi_frac > 0:
        m = (1.0 - u) < hi_frac
        t[m] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - u[m]) / hi_frac))
    return t


def boundary_window(grid: Grid2D, side: float = 0.1, top: float = 0.15, bottom: float = 0.1) -> np.ndarray:
    """Separable taper: ``side`` fraction left/right, ``top`` at z = 0, ``bottom`` at depth."""
    wx = tukey_taper(grid.nx, side, side)
    wz = tukey_taper(grid.nz, top, bottom)
    return wz[:, None] * wx[None, :]


def p_half(rho: np.ndarray, rho_band: float) -> np.ndarray:
    """``sqrt(rho)`` at low frequency with a smooth cut-off above ``rho_band``."""
    return np.sqrt(rho) * np.exp(-(rho / rho_band) ** 4)


def build_toy_symbol(grid: Grid2D, window: np.ndarray | None = None,
                     band_frac: float = 0.7) -> LowRankSymbol:
    """Rank-3 separated form of ``s_A`` via the compound-angle identity."""
    if window is None:
        window = boundary_window(grid)
    X, Z = grid.coords
    depth = window / (0.1 + (Z / grid.z_max) ** 2)
    phase = 2.0 * np.pi * X / grid.x_max
    fg = grid.freqs
    P = p_half(fg.magnitude, band_frac * fg.nyquist)
    theta = fg.angle
    a = np.stack([depth, depth * np.cos(phase), depth * np.sin(phase)])
    b = np.stack([0.6 * P, 0.5 * np.cos(2 * theta) * P, -0.5 * np.sin(2 * theta) * P]).astype(complex)
    return LowRankSymbol(grid, a, b)


def toy_symbol_closed_form(grid: Grid2D, window: np.ndarray | None = None,
                           band_frac: float = 0.7) -> np.ndarray:
    """Direct ``N x N`` evaluation of ``s_A`` (rows: space, cols: frequency)."""
    if window is None:
        window = boundary_window(grid)
    X, Z = grid.coords
    fg = grid.freqs
    P = p_half(fg.magnitude, band_frac * fg.nyquist).reshape(-1)
    theta = fg.angle.reshape(-1)
    spatial = (window / (0.1 + (Z / grid.z_max) ** 2)).reshape(-1)
    shift = (np.pi * X / grid.x_max).reshape(-1)
    return spatial[:, None] * P[None, :] * (0.1 + np.cos(theta[None, :] + shift[:, None]) ** 2)


def _smooth(field_: np.ndarray, grid: Grid2D, length: float) -> np.ndarray:
    rho = grid.freqs.magnitude
    return inverse_transform(forward_transform(field_, grid) * np.exp(-0.5 * (rho * length) ** 2), grid)


def target_from_model(model: np.ndarray, grid: Grid2D, smooth_length: float = 4.0) -> np.ndarray:
    """Normalised difference between a model and its smoothed variant."""
    d = model - _smooth(model, grid, smooth_length * min(grid.dx, grid.dz))
    peak = np.max(np.abs(d))
    return d / peak if peak > 0 else d


def random_target(grid: Grid2D, seed=0, smooth_length: float = 4.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = _smooth(rng.standard_normal(grid.shape), grid, 1.0 * min(grid.dx, grid.dz))
    return target_from_model(base, grid, smooth_length)


def plane_wave_modes(grid: Grid2D, n_modes: int = 10, decay: float = 3.0,
                     window: np.ndarray | None = None) -> np.ndarray:
    """Modes ``w(x) cos(k pi x / x_max) exp(-decay z / z_max)``, orthonormalised.

    Orthonormality is in the area-weighted inner product. Passing
    ``window=None`` drops the taper.
    """
    X, Z = grid.coords
    taper = np.ones(grid.shape) if window is None else window
    raw = np.stack([taper * np.cos(k * np.pi * X / grid.x_max) * np.exp(-decay * Z / grid.z_max)
                    for k in range(1, n_modes + 1)])
    flat = raw.reshape(n_modes, -1).T * np.sqrt(grid.cell_area)
    q, _ = np.linalg.qr(flat)
    # fix signs so each mode correlates positively with its raw shape
    signs = np.sign(np.sum(q * flat, axis=0))
    signs[signs == 0] = 1.0
    q = q * signs
    return (q.T / np.sqrt(grid.cell_area)).reshape(n_modes, *grid.shape)


@dataclass(eq=False)
class QuadraticProblem:
    grid: Grid2D
    A_symbol: LowRankSymbol
    modes: np.ndarray
    mode_weights: np.ndarray
    window: np.ndarray
    prior: BiharmonicPrior
    m_star: np.ndarray
    b: np.ndarray = field(init=False)
    data_scale: float = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.mode_weights) <= 0):
            raise ValueError("mode weights must be positive")
        self.b = self.apply_misfit_hessian(self.m_star)

    # -- operators -------------------------------------------------------
    def apply_misfit_hessian(self, m: np.ndarray) -> np.ndarray:
        """``H_d m = A A^T m + sum_i lam_i <v_i, m> v_i``."""
        self.grid.check(m)
        out = psido_apply(self.A_symbol, psido_apply_adjoint(self.A_symbol, m))
        coeffs = np.tensordot(self.modes, m, axes=([1, 2], [0, 1])) * self.grid.cell_area
        out = out + np.tensordot(self.mode_weights * coeffs, self.modes, axes=(0, 0))
        return self.data_scale * out

    def apply_data_hessian(self, m: np.ndarray) -> np.ndarray:
        """Hessian of ``m -> Phi_d(W m)``: ``W H_d W m``."""
        return self.window * self.apply_misfit_hessian(self.window * m)

    def apply_hessian(self, m: np.ndarray) -> np.ndarray:
        return self.apply_data_hessian(m) + self.prior.apply_precision(m)

    @property
    def misfit_hessian_op(self) -> LinearOperator2D:
        return LinearOperator2D(self.grid, self.apply_misfit_hessian, symmetric=True, name="H_d")

    @property
    def data_hessian_op(self) -> LinearOperator2D:
        return LinearOperator2D(self.grid, self.apply_data_hessian, symmetric=True, name="WH_dW")

    @property
    def hessian_op(self) -> LinearOperator2D:
        return LinearOperator2D(self.grid, self.apply_hessian, symmetric=True, name="H")

    @property
    def window_op(self) -> LinearOperator2D:
        return diagonal_operator(self.grid, self.window, name="W")

    # -- objective -------------------------------------------------------
    def misfit_of(self, u: np.ndarray) -> float:
        """``Phi_d(u)``."""
        g = self.grid
        return 0.5 * g.inner(u, self.apply_misfit_hessian(u)) - g.inner(self.b, u) \
            + 0.5 * g.inner(self.b, self.m_star)

    def misfit(self, m: np.ndarray) -> float:
        """Likelihood potential ``Phi_d(W m)``."""
        return self.misfit_of(self.window * m)

    def objective(self, m: np.ndarray) -> float:
        return self.misfit(m) + self.prior.neg_log_density(m)

    def gradient(self, m: np.ndarray) -> np.ndarray:
        u = self.window * m
        return self.window * (self.apply_misfit_hessian(u) - self.b) + \
            self.prior.apply_precision(m - self.prior.mean_field)

    def objective_and_gradient(self, m: np.ndarray) -> tuple[float, np.ndarray]:
        g = self.grid
        u = self.window * m
        Hu = self.apply_misfit_hessian(u)
        d = m - self.prior.mean_field
        Rd = self.prior.apply_precision(d)
        f = 0.5 * g.inner(u, Hu) - g.inner(self.b, u) + 0.5 * g.inner(self.b, self.m_star) \
            + 0.5 * g.inner(d, Rd)
        return f, self.window * (Hu - self.b) + Rd

    # -- ground truth ----------------------------------------------------
    def exact_posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and dense covariance matrix of ``exp(-Phi)`` (small grids only).

        The covariance is the matrix acting on flattened fields, i.e. the
        inverse of ``cell_area * P`` with ``P`` the Hessian operator matrix.
        """
        g = self.grid
        if g.size > DENSE_LIMIT:
            raise TooLarge(f"N={g.size} exceeds dense limit {DENSE_LIMIT}")
        P = dense_materialize(self.apply_hessian, g)
        P = 0.5 * (P + P.T)
        rhs = (self.window * self.b + self.prior.apply_precision(self.prior.mean_field)).reshape(-1)
        chol = np.linalg.cholesky(P)
        mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        linv = np.linalg.inv(chol)
        cov = (linv.T @ linv) / g.cell_area
        return mean.reshape(g.shape), cov

    def save(self, directory) -> None:
        g = self.grid
        hpf1.write_bundle(directory, {"m_star": self.m_star, "b": self.b, "window": self.window,
                                      "mode_weights": np.asarray(self.mode_weights)},
                          {"kind": "QuadraticProblem", "nx": g.nx, "nz": g.nz, "dx": g.dx,
                           "dz": g.dz, "delta": self.prior.delta, "gamma": self.prior.gamma,
                           "data_scale": self.data_scale})


def build_quadratic_problem(grid: Grid2D, *, delta: float | None = None, gamma: float | None = None,
                            corr_length: float = 10.0, prior_std: float = 1.0,
                            n_modes: int = 10, mode_decay: float = 3.0,
                            mode_weight_range: tuple[float, float] = (1e2, 1e0),
                            target: np.ndarray | None = None, target_seed=0,
                            data_scale: float = 1.0, band_frac: float = 0.7) -> QuadraticProblem:
    """Assemble the benchmark on ``grid``.

    Unless given explicitly, ``delta`` and ``gamma`` follow from a prior
    correlation length of ``corr_length`` cells and pointwise std ``prior_std``.
    A supplied ``target`` model goes through :func:`target_from_model`.
    """
    if delta is None or gamma is None:
        d0, g0 = matern_parameters(corr_length * min(grid.dx, grid.dz), prior_std)
        delta = d0 if delta is None else delta
        gamma = g0 if gamma is None else gamma
    if min(mode_weight_range) <= 0:
        raise ValueError("mode weights must be positive")
    window = boundary_window(grid)
    sym = build_toy_symbol(grid, window, band_frac)
    modes = plane_wave_modes(grid, n_modes, mode_decay, window)
    weights = np.logspace(np.log10(mode_weight_range[0]), np.log10(mode_weight_range[1]), n_modes)
    if target is None:
        m_star = random_target(grid, target_seed)
    else:
        m_star = target_from_model(grid.check(np.asarray(target, dtype=float)), grid)
    prior = BiharmonicPrior(grid, delta, gamma)
    return QuadraticProblem(grid, sym, modes, weights, window, prior, m_star, data_scale=data_scale)
