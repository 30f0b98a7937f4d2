"""Instrument projection: weights, penalty count, lasso optimality, refits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drbands import (
    ConfigurationError,
    InvalidArgumentError,
    PenaltyConfig,
    WeightVector,
    estimated_weights,
    instrument_lasso_fits,
    link_derivative,
    penalty_level,
    penalty_level_wlasso,
    post_weighted_lasso,
    weighted_lasso,
)
from drbands.errors import DegenerateColumnError
from drbands.wlasso import initial_loadings_wlasso, refine_loadings_wlasso

from conftest import rng_for


# frozen quantile-rule oracles, n=100, c=1.1, gamma=0.1/log(100),
# p_total=12 with two target columns, 40-digit independent computation
WLEVEL_CONTINUUM = 64.501809122028962  # N_n = (12-2) * 2^2 * 100^2
WLEVEL_GRID3 = 39.753202854896138  # N_n = 2 * 3


def make_projection(seed, n, p, rho=0.6, noise=0.5):
    rng = rng_for(92, seed)
    x = rng.standard_normal((n, p))
    gamma = np.zeros(p)
    gamma[: min(2, p)] = [rho, -rho / 2][: min(2, p)]
    d = x @ gamma + noise * rng.standard_normal(n)
    f2 = link_derivative(0.8 * rng.standard_normal(n))
    return d, x, WeightVector(f2)


def hand_wl_kkt(d, x, w, coef, pen):
    n = x.shape[0]
    resid = d - x @ coef
    g = -(x.T @ (w.f2 * resid)) / n
    worst = 0.0
    for k in range(x.shape[1]):
        if coef[k] > 0:
            v = abs(g[k] + pen[k])
        elif coef[k] < 0:
            v = abs(g[k] - pen[k])
        else:
            v = max(0.0, abs(g[k]) - pen[k])
        worst = max(worst, v)
    return worst


class TestWeights:
    def test_vector_validation(self):
        with pytest.raises(InvalidArgumentError):
            WeightVector(np.array([0.1, 0.0]))
        with pytest.raises(InvalidArgumentError):
            WeightVector(np.array([0.1, 0.3]))
        with pytest.raises(InvalidArgumentError):
            WeightVector(np.array([[0.1]]))
        with pytest.raises(InvalidArgumentError):
            WeightVector(np.array([0.1, np.nan]))

    def test_f_and_n(self):
        w = WeightVector(np.array([0.25, 0.09]))
        assert w.f == pytest.approx([0.5, 0.3])
        assert w.n == 2

    def test_estimated_weights_equal_link_derivative(self):
        eta = np.array([-1.5, 0.0, 0.7, 2.0])
        w = estimated_weights(eta)
        assert w.f2 == pytest.approx(link_derivative(eta), rel=1e-15)

    def test_estimated_weights_floor(self):
        w = estimated_weights(np.array([0.0, 50.0]), floor=1e-6)
        assert w.f2[0] == pytest.approx(0.25)
        assert w.f2[1] == pytest.approx(1e-6)

    def test_estimated_weights_validation(self):
        with pytest.raises(InvalidArgumentError):
            estimated_weights(np.array([np.inf]))
        with pytest.raises(InvalidArgumentError):
            estimated_weights(np.array([0.0]), floor=0.0)


class TestPenaltyCount:
    def test_frozen_continuum_fallback(self):
        cfg = PenaltyConfig()
        got = penalty_level_wlasso(100, 12, 2, cfg)
        assert got == pytest.approx(WLEVEL_CONTINUUM, rel=1e-13)

    def test_frozen_grid_cover(self):
        got = penalty_level_wlasso(100, 12, 2, PenaltyConfig(grid_size=3))
        assert got == pytest.approx(WLEVEL_GRID3, rel=1e-13)

    def test_grid_cover_scales_with_targets(self):
        # p_tilde * G pairs: four targets over grid 3 equals two targets over grid 6
        a = penalty_level_wlasso(100, 20, 4, PenaltyConfig(grid_size=3))
        b = penalty_level_wlasso(100, 20, 2, PenaltyConfig(grid_size=6))
        assert a == pytest.approx(b, rel=1e-14)

    def test_n_n_override_wins(self):
        cfg = PenaltyConfig(n_n=400_000, grid_size=3)
        assert penalty_level_wlasso(100, 12, 2, cfg) == pytest.approx(
            WLEVEL_CONTINUUM, rel=1e-13
        )

    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidArgumentError):
            penalty_level_wlasso(1, 12, 2, PenaltyConfig())
        with pytest.raises(InvalidArgumentError):
            penalty_level_wlasso(100, 12, 0, PenaltyConfig())
        with pytest.raises(InvalidArgumentError):
            penalty_level_wlasso(100, 2, 3, PenaltyConfig())

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(10, 500),
        p=st.integers(1, 50),
        p_tilde=st.integers(1, 5),
        grid=st.one_of(st.none(), st.integers(1, 20)),
    )
    def test_instrument_level_dominates_pilot_level(self, n, p, p_tilde, grid):
        # the instrument stage covers at least as many score points, so its
        # level can never fall below the pilot level at the same dimensions
        cfg = PenaltyConfig(grid_size=grid)
        p_total = p + p_tilde
        assert penalty_level_wlasso(n, p_total, p_tilde, cfg) >= penalty_level(
            n, p_total, cfg
        ) - 1e-12


class TestLoadingsWlasso:
    def test_initial_exact_case(self):
        # f = [.5,.5]; max |f x| = 2; sqrt(mean f^2 d^2) = 1 -> level 2 broadcast
        w = WeightVector(np.array([0.25, 0.25]))
        dj = np.array([2.0, 2.0])
        xj = np.array([[3.0, 1.0], [4.0, 2.0]])
        got = initial_loadings_wlasso(dj, xj, w)
        assert got == pytest.approx([2.0, 2.0], rel=1e-15)

    def test_initial_degenerate(self):
        w = WeightVector(np.array([0.25, 0.25]))
        with pytest.raises(DegenerateColumnError):
            initial_loadings_wlasso(np.zeros(2), np.array([[1.0], [2.0]]), w)

    def test_initial_empty_design(self):
        w = WeightVector(np.array([0.25, 0.25]))
        got = initial_loadings_wlasso(np.array([1.0, 2.0]), np.empty((2, 0)), w)
        assert got.shape == (0,)

    def test_refined_hand_loop(self):
        d, x, w = make_projection(5, n=30, p=3)
        gamma = np.array([0.4, 0.0, -0.2])
        got = refine_loadings_wlasso(d, x, w, gamma, PenaltyConfig())
        resid = d - x @ gamma
        f4 = w.f2**2
        for k in range(3):
            expect = math.sqrt(sum(f4[i] * resid[i] ** 2 * x[i, k] ** 2 for i in range(30)) / 30)
            floor = PenaltyConfig().loading_floor * math.sqrt(
                sum(f4[i] * x[i, k] ** 2 for i in range(30)) / 30
            )
            assert got[k] == pytest.approx(max(expect, floor), rel=1e-12)

    def test_refined_floor_under_perfect_fit(self):
        w = WeightVector(np.array([0.25, 0.16, 0.09]))
        x = np.array([[1.0, -1.0], [2.0, 0.5], [0.5, 2.0]])
        gamma = np.array([0.7, -0.3])
        d = x @ gamma
        cfg = PenaltyConfig()
        got = refine_loadings_wlasso(d, x, w, gamma, cfg)
        f4 = w.f2**2
        base = np.sqrt(np.mean(f4[:, None] * x * x, axis=0))
        assert got == pytest.approx(cfg.loading_floor * base, rel=1e-15)


class TestWeightedLasso:
    def test_kkt_certificate(self):
        d, x, w = make_projection(11, n=120, p=10)
        cfg = PenaltyConfig()
        lam = penalty_level_wlasso(120, 11, 1, PenaltyConfig(grid_size=2))
        loadings = refine_loadings_wlasso(d, x, w, np.zeros(10), cfg)
        fit = weighted_lasso(d, x, w, lam, loadings, cfg)
        assert fit.converged
        assert fit.kkt <= cfg.solver_tol
        pen = lam * loadings / 120
        assert hand_wl_kkt(d, x, w, fit.gamma, pen) == pytest.approx(fit.kkt, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), lam=st.floats(0.01, 30.0))
    def test_univariate_soft_threshold_oracle(self, seed, lam):
        # closed form for one column: soft(mean(f^2 x d), pen) / mean(f^2 x^2)
        rng = rng_for(93, seed)
        n = 40
        x = rng.standard_normal((n, 1))
        d = 0.8 * x[:, 0] + rng.standard_normal(n)
        w = WeightVector(link_derivative(rng.standard_normal(n)))
        fit = weighted_lasso(d, x, w, lam, np.array([1.0]), PenaltyConfig(solver_tol=1e-12))
        num = float(np.mean(w.f2 * x[:, 0] * d))
        den = float(np.mean(w.f2 * x[:, 0] * x[:, 0]))
        pen = lam / n
        expect = math.copysign(max(abs(num) - pen, 0.0), num) / den
        assert fit.gamma[0] == pytest.approx(expect, abs=1e-10)

    def test_zero_support_above_critical_level(self):
        d, x, w = make_projection(13, n=60, p=5)
        loadings = np.ones(5)
        g0 = np.abs(x.T @ (w.f2 * d)) / 60
        lam = 1.01 * 60 * float(np.max(g0))
        fit = weighted_lasso(d, x, w, lam, loadings, PenaltyConfig())
        assert fit.support == frozenset()
        assert fit.objective == pytest.approx(0.5 * float(np.mean(w.f2 * d * d)), rel=1e-12)

    def test_empty_design(self):
        w = WeightVector(np.array([0.2, 0.1]))
        d = np.array([1.0, -1.0])
        fit = weighted_lasso(d, np.empty((2, 0)), w, 1.0, np.empty(0), PenaltyConfig())
        assert fit.gamma.shape == (0,)
        assert fit.converged
        assert fit.objective == pytest.approx(0.5 * float(np.mean(w.f2 * d * d)))

    def test_input_validation(self):
        d, x, w = make_projection(3, n=20, p=2)
        cfg = PenaltyConfig()
        with pytest.raises(InvalidArgumentError, match="share n"):
            weighted_lasso(d[:-1], x, w, 1.0, np.ones(2), cfg)
        with pytest.raises(InvalidArgumentError, match="lam"):
            weighted_lasso(d, x, w, -1.0, np.ones(2), cfg)
        with pytest.raises(InvalidArgumentError, match="loadings"):
            weighted_lasso(d, x, w, 1.0, np.ones(3), cfg)


class TestPostRefit:
    def test_matches_scaled_least_squares(self):
        d, x, w = make_projection(17, n=80, p=6)
        post = post_weighted_lasso(d, x, w, {0, 2, 5}, PenaltyConfig())
        cols = [0, 2, 5]
        # independent route: unweighted lstsq on sqrt-weight scaled data
        f = w.f
        ref, *_ = np.linalg.lstsq(x[:, cols] * f[:, None], d * f, rcond=None)
        assert post.gamma[cols] == pytest.approx(ref, abs=1e-10)
        assert post.gamma[[1, 3, 4]] == pytest.approx(np.zeros(3))
        assert post.lam == 0.0 and post.loadings is None
        assert post.kkt <= 1e-10
        assert post.converged

    def test_first_order_conditions(self):
        d, x, w = make_projection(19, n=50, p=4)
        post = post_weighted_lasso(d, x, w, {1, 3}, PenaltyConfig())
        resid = d - x @ post.gamma
        g = x[:, [1, 3]].T @ (w.f2 * resid) / 50
        assert np.max(np.abs(g)) <= 1e-12

    def test_empty_support(self):
        d, x, w = make_projection(23, n=30, p=3)
        post = post_weighted_lasso(d, x, w, frozenset(), PenaltyConfig())
        assert post.gamma == pytest.approx(np.zeros(3))
        assert post.objective == pytest.approx(0.5 * float(np.mean(w.f2 * d * d)))

    def test_duplicated_column_flags_ridge(self):
        rng = rng_for(94, 1)
        x1 = rng.standard_normal(40)
        x = np.column_stack([x1, x1])
        d = x1 + 0.1 * rng.standard_normal(40)
        w = WeightVector(np.full(40, 0.25))
        post = post_weighted_lasso(d, x, w, {0, 1}, PenaltyConfig())
        assert post.diagnostics["ridge_jitter"]
        assert not post.converged

    def test_rejects_bad_support(self):
        d, x, w = make_projection(2, n=20, p=2)
        with pytest.raises(InvalidArgumentError, match="out of range"):
            post_weighted_lasso(d, x, w, {7}, PenaltyConfig())


class TestInstrumentLoop:
    def test_requires_refinement(self):
        d, x, w = make_projection(29, n=40, p=3)
        with pytest.raises(ConfigurationError, match="max_loops"):
            instrument_lasso_fits(d, x, w, PenaltyConfig(max_loops=0))

    def test_level_and_counter(self):
        d, x, w = make_projection(31, n=100, p=11)
        cfg = PenaltyConfig(max_loops=2, grid_size=3)
        pen, post = instrument_lasso_fits(d, x, w, cfg, p_tilde=2)
        assert pen.lam == pytest.approx(penalty_level_wlasso(100, 13, 2, cfg), rel=1e-14)
        assert pen.loading_refinements == 2
        assert post.loading_refinements == 2
        assert post.support == pen.support

    def test_empty_design_passthrough(self):
        w = WeightVector(np.array([0.2, 0.1, 0.25]))
        d = np.array([0.5, -0.5, 1.0])
        pen, post = instrument_lasso_fits(d, np.empty((3, 0)), w, PenaltyConfig())
        assert pen.gamma.shape == (0,) and post.gamma.shape == (0,)
        assert pen.converged and post.converged

    def test_recovers_strong_projection(self):
        d, x, w = make_projection(37, n=300, p=8, rho=1.2, noise=0.4)
        cfg = PenaltyConfig(grid_size=1)
        pen, post = instrument_lasso_fits(d, x, w, cfg)
        assert 0 in post.support
        resid_n = d - x @ post.gamma
        # refit residual variance cannot exceed the marginal variance
        assert float(np.mean(w.f2 * resid_n**2)) < float(np.mean(w.f2 * d**2))
