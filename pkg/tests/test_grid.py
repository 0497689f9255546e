import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessapprox.errors import GridMismatch, NonHermitianInput
from hessapprox.grid import (Grid2D, count_transforms, delta_field, flip_frequencies,
                             forward_transform, hermitian_part, inverse_transform)

from conftest import dft_matrices

shapes = st.tuples(st.integers(4, 20), st.integers(4, 20))
spacings = st.floats(0.2, 5.0)


@settings(max_examples=40, deadline=None)
@given(shapes, spacings, spacings, st.integers(0, 2**31))
def test_round_trip(shape, dx, dz, seed):
    g = Grid2D(shape[1], shape[0], dx, dz)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    back = inverse_transform(forward_transform(f, g), g)
    assert np.abs(back - f).max() <= 1e-12 * max(1.0, np.abs(f).max())


def test_forward_matches_explicit_sum(grid_rect, rng):
    F, _ = dft_matrices(grid_rect)
    f = rng.standard_normal(grid_rect.shape)
    ref = (F @ f.ravel()).reshape(grid_rect.shape)
    np.testing.assert_allclose(forward_transform(f, grid_rect), ref, atol=1e-12)


def test_delta_row_is_one(grid_rect):
    # the symbol row of the identity's point spread function is 1 everywhere
    d = delta_field(grid_rect, 0, 0)
    assert np.isclose(d.sum() * grid_rect.cell_area, 1.0)
    row = (2 * np.pi) ** 2 * np.conj(forward_transform(d, grid_rect))
    np.testing.assert_allclose(row, 1.0, atol=1e-13)


def test_real_field_spectrum_is_hermitian(grid_rect, rng):
    s = forward_transform(rng.standard_normal(grid_rect.shape), grid_rect)
    np.testing.assert_allclose(flip_frequencies(s), np.conj(s), atol=1e-12)
    np.testing.assert_allclose(hermitian_part(s), s, atol=1e-12)


def test_non_hermitian_rejected(grid_rect, rng):
    s = rng.standard_normal(grid_rect.shape) + 1j * rng.standard_normal(grid_rect.shape)
    with pytest.raises(NonHermitianInput):
        inverse_transform(s, grid_rect)
    out = inverse_transform(hermitian_part(s), grid_rect)
    assert out.dtype == float


def test_shape_checks(grid16):
    with pytest.raises(GridMismatch):
        forward_transform(np.zeros((16, 15)), grid16)
    with pytest.raises(GridMismatch):
        grid16.check(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        Grid2D(3, 8)
    with pytest.raises(ValueError):
        Grid2D(8, 8, dx=0.0)


def test_frequencies(grid_rect):
    fg = grid_rect.freqs
    assert fg.xi_x[1] == pytest.approx(2 * np.pi / grid_rect.x_max)
    assert fg.nyquist == pytest.approx(min(np.pi / grid_rect.dx, np.pi / grid_rect.dz))
    iz, ix = fg.nearest_index(3 * fg.dxi_x, -2 * fg.dxi_z)
    assert (iz, ix) == (grid_rect.nz - 2, 3)
    assert fg.negate_index(iz, ix) == (2, grid_rect.nx - 3)


def test_inner_product_and_indices(grid_rect, rng):
    u, v = rng.standard_normal((2,) + grid_rect.shape)
    assert grid_rect.inner(u, v) == pytest.approx(np.sum(u * v) * grid_rect.cell_area)
    k = grid_rect.flat_index(3, 5)
    assert grid_rect.unflat_index(k) == (3, 5)


def test_scaled_keeps_extent():
    g = Grid2D(20, 10, 2.0, 3.0).scaled(0.5)
    assert (g.nx, g.nz) == (10, 5)
    assert g.x_max == pytest.approx(40.0) and g.z_max == pytest.approx(30.0)


def test_transform_counter(grid16, rng):
    f = rng.standard_normal((3,) + grid16.shape)
    with count_transforms() as c:
        forward_transform(f, grid16)
        inverse_transform(forward_transform(f[0], grid16), grid16)
    assert c["transforms"] == 5
