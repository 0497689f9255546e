import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessapprox.errors import IndexOutOfRange, TooLarge
from hessapprox.grid import Grid2D, count_transforms
from hessapprox.psido import (LowRankSymbol, as_operator, dense_materialize, eval_symbol_cols,
                              eval_symbol_rows, identity_operator, multiplier_operator,
                              psido_apply, psido_apply_adjoint, psido_apply_symmetric)

from conftest import dft_matrices, random_symbol


def dense_psido(sym):
    """Row-based apply as an explicit matrix: (1/N) sum_xi s(x, xi) exp(i (x - y) xi)."""
    F, Finv = dft_matrices(sym.grid)
    S = sym.a.reshape(sym.rank, -1).T @ sym.b.reshape(sym.rank, -1)
    return (Finv * S) @ F


def test_apply_matches_dense_oracle():
    g = Grid2D(16, 16)
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(20):
        sym = random_symbol(g, 1 + k % 5, rng, hermitian=k % 2 == 0)
        K = dense_psido(sym)
        v = rng.standard_normal(g.shape)
        ref = (K @ v.ravel()).real.reshape(g.shape)
        got = psido_apply(sym, v)
        worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
        adj = (K.conj().T @ v.ravel()).real.reshape(g.shape)
        worst = max(worst, np.abs(psido_apply_adjoint(sym, v) - adj).max() / np.abs(adj).max())
    assert worst <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 12), st.integers(4, 12), st.integers(1, 4), st.booleans(), st.integers(0, 2**31))
def test_adjoint_identity(nx, nz, rank, herm, seed):
    g = Grid2D(nx, nz, 1.3, 0.7)
    rng = np.random.default_rng(seed)
    sym = random_symbol(g, rank, rng, hermitian=herm)
    u, v = rng.standard_normal((2,) + g.shape)
    lhs = g.inner(psido_apply(sym, u), v)
    rhs = g.inner(u, psido_apply_adjoint(sym, v))
    scale = g.norm(psido_apply(sym, u)) * g.norm(v) + 1e-300
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_identity_and_multiplier(grid16, rng):
    v = rng.standard_normal(grid16.shape)
    np.testing.assert_allclose(psido_apply(LowRankSymbol.identity(grid16), v), v, atol=1e-12)
    b = np.exp(-grid16.freqs.magnitude ** 2)
    np.testing.assert_allclose(psido_apply(LowRankSymbol.multiplier(grid16, b), v),
                               multiplier_operator(grid16, b)(v), atol=1e-12)


def test_spatial_multiplier_symbol(grid16, rng):
    c = rng.standard_normal(grid16.shape)
    sym = LowRankSymbol(grid16, c, np.ones(grid16.shape))
    v = rng.standard_normal(grid16.shape)
    np.testing.assert_allclose(psido_apply(sym, v), c * v, atol=1e-12)


def test_rows_cols_and_dense_symbol(grid16, rng):
    sym = random_symbol(grid16, 3, rng)
    S = sym.to_dense_symbol()
    rows = eval_symbol_rows(sym, [(2, 3), (5, 7)])
    np.testing.assert_allclose(rows, S[[grid16.flat_index(2, 3), grid16.flat_index(5, 7)]])
    cols = eval_symbol_cols(sym, [4, 100])
    np.testing.assert_allclose(cols, S[:, [4, 100]])
    assert sym.evaluate(10, 20) == pytest.approx(S[10, 20])
    with pytest.raises(IndexOutOfRange):
        eval_symbol_rows(sym, [(16, 0)])
    with pytest.raises(IndexOutOfRange):
        eval_symbol_cols(sym, [grid16.size])


def test_symmetric_part_is_self_adjoint(grid16, rng):
    sym = random_symbol(grid16, 2, rng)
    K = dense_materialize(lambda v: psido_apply_symmetric(sym, v), grid16)
    np.testing.assert_allclose(K, K.T, atol=1e-10)
    op = as_operator(sym, "symmetric")
    assert op.symmetric
    with pytest.raises(ValueError):
        as_operator(sym, "transpose")


def test_operator_algebra(grid16, rng):
    sym = random_symbol(grid16, 2, rng)
    A = as_operator(sym)
    I = identity_operator(grid16)
    v = rng.standard_normal(grid16.shape)
    np.testing.assert_allclose((A + I)(v), psido_apply(sym, v) + v)
    np.testing.assert_allclose((A @ A)(v), psido_apply(sym, psido_apply(sym, v)))
    np.testing.assert_allclose(A.T(v), psido_apply_adjoint(sym, v))
    np.testing.assert_allclose(A.scaled(2.0)(v), 2 * psido_apply(sym, v))


def test_transform_cost(grid16, rng):
    sym = random_symbol(grid16, 4, rng)
    v = rng.standard_normal(grid16.shape)
    with count_transforms() as c:
        psido_apply(sym, v)
    assert c["transforms"] == 1 + sym.rank


def test_save_load(tmp_path, grid_rect, rng):
    sym = random_symbol(grid_rect, 3, rng, hermitian=False)
    sym.save(tmp_path / "s")
    back = LowRankSymbol.load(tmp_path / "s")
    assert back.grid == grid_rect
    np.testing.assert_array_equal(back.a, sym.a)
    np.testing.assert_array_equal(back.b, sym.b)


def test_validation(grid16):
    with pytest.raises(ValueError):
        LowRankSymbol(grid16, np.ones((2,) + grid16.shape), np.ones((3,) + grid16.shape))
    with pytest.raises(ValueError):
        LowRankSymbol(grid16, np.full(grid16.shape, np.nan), np.ones(grid16.shape))
    with pytest.raises(TooLarge):
        dense_materialize(lambda v: v, Grid2D(80, 80))
