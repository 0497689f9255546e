"""Regular 2D grids, frequency coordinates and the scaled Fourier pair.

Fields are real ``(nz, nx)`` arrays (z-major, row-major flattening).
Spectra are complex ``(nz, nx)`` arrays in unshifted DFT order.

The continuous convention ``v_hat = 1/(2 pi)^2 * int exp(-i x.xi) v(x) dx``
is discretised as ``fft2(v) * dx*dz / (2 pi)^2``; the inverse is the exact
inverse of that map. With this scaling a symbol row is ``(2 pi)^2`` times
the conjugated spectrum of the corresponding point spread function.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, NonHermitianInput

TWO_PI_SQ = (2.0 * np.pi) ** 2

# active transform counters (see count_transforms)
_COUNTERS: list[dict] = []


@dataclass(frozen=True)
class Grid2D:
    nx: int
    nz: int
    dx: float = 1.0
    dz: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.nz) != self.nz:
            raise ValueError("grid sizes must be integers")
        if self.nx < 4 or self.nz < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.nz}x{self.nx}")
        if not (self.dx > 0 and self.dz > 0):
            raise ValueError("grid spacings must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nz, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz

    @property
    def x_max(self) -> float:
        return self.nx * self.dx

    @property
    def z_max(self) -> float:
        return self.nz * self.dz

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates ``(X, Z)`` of every grid point, each ``(nz, nx)``."""
        x = np.arange(self.nx) * self.dx
        z = np.arange(self.nz) * self.dz
        Z, X = np.meshgrid(z, x, indexing="ij")
        return X, Z

    @cached_property
    def freqs(self) -> "FreqGrid":
        return freq_coords(self)

    def scaled(self, factor: float) -> "Grid2D":
        """Same physical extent, ``factor`` times as many points per axis."""
        nx = max(4, int(round(self.nx * factor)))
        nz = max(4, int(round(self.nz * factor)))
        return Grid2D(nx, nz, self.x_max / nx, self.z_max / nz)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Area-weighted inner product ``sum(u * v) * dx * dz``."""
        return float(np.vdot(u, v).real) * self.cell_area

    def norm(self, u: np.ndarray) -> float:
        return np.sqrt(self.inner(u, u))

    def check(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise GridMismatch(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f

    def check_stack(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        """Like :meth:`check` but allows leading stack axes."""
        f = np.asarray(f)
        if f.shape[-2:] != self.shape:
            raise GridMismatch(f"{name} has shape {f.shape}, grid expects (..., {self.nz}, {self.nx})")
        return f

    def flat_index(self, iz: int, ix: int) -> int:
        return iz * self.nx + ix

    def unflat_index(self, k: int) -> tuple[int, int]:
        return divmod(int(k), self.nx)


@dataclass(frozen=True)
class FreqGrid:
    """Angular frequencies on the DFT index layout of ``grid``."""

    grid: Grid2D
    xi_x: np.ndarray
    xi_z: np.ndarray

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(XI_X, XI_Z)`` broadcast to the grid shape."""
        XZ, XX = np.meshgrid(self.xi_z, self.xi_x, indexing="ij")
        return XX, XZ

    @cached_property
    def magnitude(self) -> np.ndarray:
        XX, XZ = self.mesh
        return np.hypot(XX, XZ)

    @cached_property
    def angle(self) -> np.ndarray:
        XX, XZ = self.mesh
        return np.arctan2(XZ, XX)

    @property
    def dxi_x(self) -> float:
        return 2.0 * np.pi / (self.grid.nx * self.grid.dx)

    @property
    def dxi_z(self) -> float:
        return 2.0 * np.pi / (self.grid.nz * self.grid.dz)

    @property
    def nyquist(self) -> float:
        return min(np.pi / self.grid.dx, np.pi / self.grid.dz)

    def nearest_index(self, xi_x: float, xi_z: float) -> tuple[int, int]:
        """DFT index ``(iz, ix)`` of the grid frequency closest to ``(xi_x, xi_z)``."""
        jx = int(round(xi_x / self.dxi_x)) % self.grid.nx
        jz = int(round(xi_z / self.dxi_z)) % self.grid.nz
        return jz, jx

    def negate_index(self, iz: int, ix: int) -> tuple[int, int]:
        return (-iz) % self.grid.nz, (-ix) % self.grid.nx


def freq_coords(g: Grid2D) -> FreqGrid:
    xi_x = 2.0 * np.pi * np.fft.fftfreq(g.nx, d=g.dx)
    xi_z = 2.0 * np.pi * np.fft.fftfreq(g.nz, d=g.dz)
    return FreqGrid(g, xi_x, xi_z)


def _tick(n: int = 1) -> None:
    for c in _COUNTERS:
        c["transforms"] += n


@contextlib.contextmanager
def count_transforms():
    """Count forward and inverse transforms executed inside the block.

    >>> with count_transforms() as c:
    ...     ...
    >>> c["transforms"]
    """
    counter = {"transforms": 0}
    _COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _COUNTERS.remove(counter)


def forward_transform(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Scaled 2D DFT of a field (or a stack of fields along leading axes)."""
    f = np.asarray(f)
    if f.shape[-2:] != grid.shape:
        raise GridMismatch(f"field shape {f.shape} does not match grid {grid.shape}")
    _tick(int(np.prod(f.shape[:-2], dtype=int)))
    return np.fft.fft2(f) * (grid.cell_area / TWO_PI_SQ)


def inverse_transform(s: np.ndarray, grid: Grid2D, real: bool = True,
                      rtol: float = 1e-10) -> np.ndarray:
    """Exact inverse of :func:`forward_transform`.

    With ``real=True`` the imaginary part is checked against ``rtol`` relative
    to the output magnitude and dropped; ``NonHermitianInput`` is raised when
    it is too large.
    """
    s = np.asarray(s)
    if s.shape[-2:] != grid.shape:
        raise GridMismatch(f"spectrum shape {s.shape} does not match grid {grid.shape}")
    _tick(int(np.prod(s.shape[:-2], dtype=int)))
    out = np.fft.ifft2(s) * (TWO_PI_SQ / grid.cell_area)
    if not real:
        return out
    scale = np.max(np.abs(out)) if out.size else 0.0
    resid = np.max(np.abs(out.imag)) if out.size else 0.0
    if scale > 0 and resid > rtol * scale:
        raise NonHermitianInput(
            f"imaginary residual {resid:.3e} exceeds {rtol:g} relative")
    return out.real.copy()


def hermitian_part(s: np.ndarray) -> np.ndarray:
    """Project a spectrum onto the Hermitian-symmetric subspace."""
    flipped = np.roll(np.flip(s, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1))
    return 0.5 * (s + np.conj(flipped))


def flip_frequencies(s: np.ndarray) -> np.ndarray:
    """Return ``s(-xi)`` on the DFT index layout."""
    return np.roll(np.flip(s, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1))


def delta_field(grid: Grid2D, iz: int, ix: int) -> np.ndarray:
    """Discrete delta of unit integral at grid point ``(iz, ix)``."""
    f = np.zeros(grid.shape)
    f[iz, ix] = 1.0 / grid.cell_area
    return f
