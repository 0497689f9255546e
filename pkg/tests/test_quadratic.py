import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessapprox.errors import TooLarge
from hessapprox.grid import Grid2D
from hessapprox.psido import dense_materialize
from hessapprox.quadratic import (boundary_window, build_quadratic_problem, build_toy_symbol,
                                  plane_wave_modes, toy_symbol_closed_form, tukey_taper)


@pytest.fixture(scope="module")
def prob():
    return build_quadratic_problem(Grid2D(16, 12), corr_length=4.0)


@pytest.mark.parametrize("grid", [Grid2D(16, 16), Grid2D(24, 12, 2.0, 0.5)])
def test_toy_symbol_rank3_identity(grid):
    sym = build_toy_symbol(grid)
    assert sym.rank == 3
    S = sym.to_dense_symbol()
    C = toy_symbol_closed_form(grid)
    assert np.abs(S - C).max() <= 1e-14 * np.abs(C).max()


def test_gradient_matches_finite_differences(prob, rng):
    m = rng.standard_normal(prob.grid.shape)
    gr = prob.gradient(m)
    for _ in range(5):
        d = rng.standard_normal(prob.grid.shape)
        h = 1e-4
        fd = (prob.objective(m + h * d) - prob.objective(m - h * d)) / (2 * h)
        an = prob.grid.inner(gr, d)
        assert abs(fd - an) <= 1e-6 * abs(an)


def test_objective_and_gradient_consistent(prob, rng):
    m = rng.standard_normal(prob.grid.shape)
    f, g = prob.objective_and_gradient(m)
    assert f == pytest.approx(prob.objective(m), rel=1e-12)
    np.testing.assert_allclose(g, prob.gradient(m), atol=1e-10)


def test_misfit_vanishes_at_target(prob):
    assert abs(prob.misfit_of(prob.m_star)) < 1e-10 * prob.grid.inner(prob.b, prob.m_star)


def test_hessians_symmetric_and_psd(prob):
    Hd = dense_materialize(prob.apply_misfit_hessian, prob.grid)
    np.testing.assert_allclose(Hd, Hd.T, atol=1e-10 * np.abs(Hd).max())
    assert np.linalg.eigvalsh(0.5 * (Hd + Hd.T)).min() > -1e-10 * np.abs(Hd).max()
    H = dense_materialize(prob.apply_hessian, prob.grid)
    assert np.linalg.eigvalsh(0.5 * (H + H.T)).min() > 0


def test_gradient_is_hessian_times_error(prob, rng):
    # quadratic objective: grad(m) - grad(0) = H m
    m = rng.standard_normal(prob.grid.shape)
    np.testing.assert_allclose(prob.gradient(m) - prob.gradient(np.zeros_like(m)),
                               prob.apply_hessian(m), atol=1e-9)


def test_exact_posterior_mean_is_stationary(prob):
    mean, cov = prob.exact_posterior()
    assert np.abs(prob.gradient(mean)).max() < 1e-8 * np.abs(prob.b).max()
    np.testing.assert_allclose(cov, cov.T, atol=1e-12 * np.abs(cov).max())


def test_exact_posterior_size_limit():
    p = build_quadratic_problem(Grid2D(80, 80))
    with pytest.raises(TooLarge):
        p.exact_posterior()


def test_modes_orthonormal():
    g = Grid2D(20, 14, 1.5, 1.0)
    V = plane_wave_modes(g, 6).reshape(6, -1)
    np.testing.assert_allclose(V @ V.T * g.cell_area, np.eye(6), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 60), st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_tukey_taper(n, lo, hi):
    t = tukey_taper(n, lo, hi)
    assert t.shape == (n,) and t.min() >= 0 and t.max() <= 1
    if lo > 0:
        assert t[0] == pytest.approx(0.0, abs=1e-15)
    if hi > 0:
        assert t[-1] == pytest.approx(0.0, abs=1e-15)


def test_window_vanishes_on_boundary():
    w = boundary_window(Grid2D(20, 16))
    assert w[0].max() == 0 and w[-1].max() == 0 and w[:, 0].max() == 0 and w[:, -1].max() == 0


def test_problem_options():
    g = Grid2D(12, 12)
    target = np.random.default_rng(0).standard_normal(g.shape)
    p = build_quadratic_problem(g, delta=0.5, gamma=2.0, target=target, data_scale=3.0)
    assert p.prior.delta == 0.5 and p.prior.gamma == 2.0
    assert np.abs(p.m_star).max() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        build_quadratic_problem(g, mode_weight_range=(1.0, -1.0))
