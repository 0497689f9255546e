import numpy as np
import pytest

from hessapprox.grid import Grid2D


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid16():
    return Grid2D(16, 16)


@pytest.fixture
def grid_rect():
    return Grid2D(12, 10, 1.5, 0.8)


def dft_matrices(grid):
    """Explicit forward/inverse matrices of the scaled transform (no FFT)."""
    X, Z = grid.coords
    XX, XZ = grid.freqs.mesh
    x = np.stack([X.ravel(), Z.ravel()], axis=1)
    xi = np.stack([XX.ravel(), XZ.ravel()], axis=1)
    E = np.exp(-1j * (xi @ x.T))                     # (freq, space)
    F = E * grid.cell_area / (2 * np.pi) ** 2
    Finv = np.conj(E.T) * (2 * np.pi) ** 2 / (grid.cell_area * grid.size)
    return F, Finv


def random_symbol(grid, rank, rng, hermitian=True):
    """Random separated symbol; Hermitian frequency factors give real output."""
    from hessapprox.grid import forward_transform
    from hessapprox.psido import LowRankSymbol
    a = rng.standard_normal((rank,) + grid.shape)
    if hermitian:
        b = np.stack([forward_transform(rng.standard_normal(grid.shape), grid) for _ in range(rank)])
        b = b / np.abs(b).max()
    else:
        b = rng.standard_normal((rank,) + grid.shape) + 1j * rng.standard_normal((rank,) + grid.shape)
    return LowRankSymbol(grid, a, b)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
