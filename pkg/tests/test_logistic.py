"""Penalty rule, loadings, l1 solver optimality, and Newton refit."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from drbands import (
    ConfigurationError,
    DegenerateColumnError,
    InvalidArgumentError,
    PenaltyConfig,
    fit_penalized_logistic,
    l1_logistic,
    logistic_link,
    penalty_level,
    post_logistic_refit,
)
from drbands.logistic import (
    _quantile_level,
    initial_loadings_logistic,
    newton_logistic,
    refine_loadings_logistic,
)

from conftest import rng_for


# frozen quantile-rule oracles, n=100, c=1.1, gamma=0.1/log(100),
# computed independently at 40-digit precision
LEVEL_CONTINUUM = 46.945844876036856  # p_total=11, N_n = n = 100
LEVEL_GRID3 = 37.471470622909919  # p_total=11, N_n = 3
LEVEL_GRID1 = 34.035171948299956  # p_total=11, N_n = 1
LOGIT_03 = -0.8472978603872036


def make_binary(seed, n, p_total, beta=None):
    rng = rng_for(91, seed)
    z = rng.standard_normal((n, p_total))
    if beta is None:
        beta = np.zeros(p_total)
        beta[: min(3, p_total)] = [0.9, -0.6, 0.3][: min(3, p_total)]
    y = (rng.random(n) < logistic_link(z @ beta)).astype(np.float64)
    return z, y


def hand_kkt(z, y, coef, pen):
    # independent recomputation of the reported optimality residual
    n = z.shape[0]
    g = z.T @ (logistic_link(z @ coef) - y) / n
    worst = 0.0
    for k in range(z.shape[1]):
        if coef[k] > 0:
            v = abs(g[k] + pen[k])
        elif coef[k] < 0:
            v = abs(g[k] - pen[k])
        else:
            v = max(0.0, abs(g[k]) - pen[k])
        worst = max(worst, v)
    return worst


class TestPenaltyLevel:
    def test_frozen_continuum_fallback(self):
        cfg = PenaltyConfig()
        assert penalty_level(100, 11, cfg) == pytest.approx(LEVEL_CONTINUUM, rel=1e-13)

    def test_frozen_grid_counts(self):
        assert penalty_level(100, 11, PenaltyConfig(grid_size=3)) == pytest.approx(
            LEVEL_GRID3, rel=1e-13
        )
        assert penalty_level(100, 11, PenaltyConfig(grid_size=1)) == pytest.approx(
            LEVEL_GRID1, rel=1e-13
        )

    def test_n_n_overrides_grid_size(self):
        cfg = PenaltyConfig(n_n=100, grid_size=3)
        assert penalty_level(100, 11, cfg) == pytest.approx(LEVEL_CONTINUUM, rel=1e-13)

    def test_monotone_in_union_count(self):
        levels = [penalty_level(100, 11, PenaltyConfig(n_n=k)) for k in (1, 3, 10, 100, 10_000)]
        assert all(a < b for a, b in zip(levels, levels[1:]))

    def test_linear_in_c(self):
        lo = penalty_level(100, 11, PenaltyConfig(c=1.1))
        hi = penalty_level(100, 11, PenaltyConfig(c=2.2))
        assert hi == pytest.approx(2.0 * lo, rel=1e-13)

    def test_explicit_gamma_matches_default(self):
        cfg = PenaltyConfig(gamma=0.1 / math.log(100))
        assert penalty_level(100, 11, cfg) == pytest.approx(LEVEL_CONTINUUM, rel=1e-13)

    def test_rejects_degenerate_sizes(self):
        with pytest.raises(InvalidArgumentError):
            penalty_level(1, 5, PenaltyConfig())
        with pytest.raises(InvalidArgumentError):
            penalty_level(100, 0, PenaltyConfig())

    def test_tail_bounds_enforced(self):
        with pytest.raises(ConfigurationError, match="outside"):
            _quantile_level(100, 0.7, 1.1)
        with pytest.raises(ConfigurationError, match="outside"):
            _quantile_level(100, 0.0, 1.1)
        # count so large the quantile argument rounds to one
        with pytest.raises(ConfigurationError, match="underflows"):
            penalty_level(100, 1, PenaltyConfig(n_n=10**18))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"c": 0.0},
            {"c": -1.0},
            {"gamma": 0.0},
            {"gamma": 1.0},
            {"n_n": 0},
            {"grid_size": 0},
            {"max_loops": -1},
            {"solver_tol": 0.0},
            {"max_sweeps": 0},
            {"refit_max_iter": 0},
            {"coef_cap": -2.0},
            {"loading_floor": 0.0},
        ],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            PenaltyConfig(**kwargs)


class TestLoadings:
    def test_initial_hand_loop(self):
        z = np.array([[1.0, 2.0], [3.0, -4.0], [0.0, 2.0]])
        got = initial_loadings_logistic(z)
        for k in range(2):
            expect = 0.5 * math.sqrt(sum(z[i, k] ** 2 for i in range(3)) / 3)
            assert got[k] == pytest.approx(expect, rel=1e-15)

    def test_initial_rejects_zero_column(self):
        z = np.array([[1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DegenerateColumnError, match="column 1"):
            initial_loadings_logistic(z)

    def test_refined_hand_loop(self):
        z, y = make_binary(5, n=40, p_total=3)
        eta = 0.2 * z[:, 0] - 0.1 * z[:, 2]
        got = refine_loadings_logistic(z, y, eta, PenaltyConfig())
        resid = y - logistic_link(eta)
        for k in range(3):
            expect = math.sqrt(sum((z[i, k] * resid[i]) ** 2 for i in range(40)) / 40)
            assert got[k] == pytest.approx(expect, rel=1e-12)

    def test_refined_floor_under_perfect_fit(self):
        z = np.array([[1.0, -2.0], [0.5, 1.0], [2.0, 0.25]])
        eta = np.array([0.3, -0.7, 1.1])
        cfg = PenaltyConfig()
        # zero residuals: the loading collapses to the configured floor
        got = refine_loadings_logistic(z, logistic_link(eta), eta, cfg)
        scales = np.sqrt(np.mean(z * z, axis=0))
        assert got == pytest.approx(cfg.loading_floor * scales, rel=1e-15)


class TestL1Logistic:
    def test_kkt_certificate(self):
        z, y = make_binary(11, n=150, p_total=12)
        cfg = PenaltyConfig()
        lam = penalty_level(150, 12, cfg)
        loadings = initial_loadings_logistic(z)
        fit = l1_logistic(z, y, lam, loadings, cfg)
        assert fit.converged
        assert fit.kkt <= cfg.solver_tol
        pen = lam * loadings / 150
        assert hand_kkt(z, y, fit.coefficients, pen) == pytest.approx(fit.kkt, abs=1e-12)

    def test_unpenalized_matches_newton(self):
        z, y = make_binary(23, n=120, p_total=3)
        cfg = PenaltyConfig(solver_tol=1e-10)
        fit = l1_logistic(z, y, 0.0, np.ones(3), cfg)
        mle, grad_norm, converged, _, _ = newton_logistic(z, y, cfg)
        assert converged and grad_norm <= cfg.refit_tol
        assert fit.coefficients == pytest.approx(mle, abs=1e-7)

    def test_all_zero_above_critical_level(self):
        z, y = make_binary(31, n=100, p_total=6)
        loadings = initial_loadings_logistic(z)
        g0 = np.abs(z.T @ (0.5 - y)) / 100
        lam = 1.01 * 100 * float(np.max(g0 / loadings))
        fit = l1_logistic(z, y, lam, loadings, PenaltyConfig())
        assert fit.support == frozenset()
        assert fit.objective == pytest.approx(math.log(2.0), rel=1e-12)

    def test_objective_path_nonincreasing(self):
        z, y = make_binary(41, n=100, p_total=8)
        cfg = PenaltyConfig()
        lam = penalty_level(100, 8, cfg)
        fit = l1_logistic(z, y, lam, initial_loadings_logistic(z), cfg)
        path = fit.diagnostics["objective_path"]
        assert np.all(np.diff(path) <= 1e-12)
        assert path[-1] == pytest.approx(fit.objective)

    def test_input_validation(self):
        z, y = make_binary(3, n=20, p_total=2)
        cfg = PenaltyConfig()
        with pytest.raises(InvalidArgumentError, match="0/1"):
            l1_logistic(z, y + 0.5, 1.0, np.ones(2), cfg)
        with pytest.raises(InvalidArgumentError, match="lam"):
            l1_logistic(z, y, -1.0, np.ones(2), cfg)
        with pytest.raises(InvalidArgumentError, match="loadings"):
            l1_logistic(z, y, 1.0, np.array([1.0, 0.0]), cfg)
        with pytest.raises(InvalidArgumentError, match="coef0"):
            l1_logistic(z, y, 1.0, np.ones(2), cfg, coef0=np.zeros(3))
        with pytest.raises(InvalidArgumentError, match="length"):
            l1_logistic(z, y[:-1], 1.0, np.ones(2), cfg)

    def test_coefficients_read_only(self):
        z, y = make_binary(7, n=30, p_total=2)
        fit = l1_logistic(z, y, 5.0, np.ones(2), PenaltyConfig())
        with pytest.raises(ValueError):
            fit.coefficients[0] = 1.0

    @settings(max_examples=12, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(30, 60),
        p_total=st.integers(1, 4),
        scale=st.floats(0.2, 3.0),
    )
    def test_kkt_residual_property(self, seed, n, p_total, scale):
        z, y = make_binary(seed, n=n, p_total=p_total)
        if y.min() == y.max():
            return
        cfg = PenaltyConfig()
        lam = scale * penalty_level(n, p_total, cfg)
        loadings = initial_loadings_logistic(z)
        fit = l1_logistic(z, y, lam, loadings, cfg)
        assert hand_kkt(z, y, fit.coefficients, lam * loadings / n) <= 5 * cfg.solver_tol


class TestNewtonRefit:
    def test_intercept_only_closed_form(self):
        z = np.ones((10, 1))
        y = np.array([1.0, 1.0, 1.0] + [0.0] * 7)
        coef, grad_norm, converged, _, flags = newton_logistic(z, y, PenaltyConfig())
        assert converged and grad_norm <= 1e-10
        assert coef[0] == pytest.approx(LOGIT_03, abs=1e-9)
        assert not flags["capped"]

    def test_matches_generic_minimizer(self):
        z, y = make_binary(13, n=90, p_total=3)

        def deviance(b):
            eta = z @ b
            return float(np.mean(np.logaddexp(0.0, eta) - y * eta))

        ref = minimize(deviance, np.zeros(3), method="BFGS", tol=1e-12)
        coef, _, converged, _, _ = newton_logistic(z, y, PenaltyConfig())
        assert converged
        assert coef == pytest.approx(ref.x, abs=1e-6)

    def test_separated_data_hits_cap(self):
        z = np.linspace(-2.0, 2.0, 40).reshape(-1, 1)
        y = (z[:, 0] > 0).astype(np.float64)
        coef, _, converged, _, flags = newton_logistic(z, y, PenaltyConfig())
        assert flags["capped"]
        assert not converged
        assert abs(coef[0]) == pytest.approx(PenaltyConfig().coef_cap)

    def test_post_refit_empty_support(self):
        z, y = make_binary(17, n=25, p_total=4)
        post = post_logistic_refit(z, y, frozenset(), PenaltyConfig())
        assert post.coefficients == pytest.approx(np.zeros(4))
        assert post.converged and post.gradient_norm == 0.0

    def test_post_refit_zeroes_off_support(self):
        z, y = make_binary(19, n=100, p_total=5)
        cfg = PenaltyConfig()
        post = post_logistic_refit(z, y, {0, 3}, cfg)
        assert post.coefficients[1] == post.coefficients[2] == post.coefficients[4] == 0.0
        assert post.support == frozenset({0, 3})
        # first-order conditions on the refit columns
        g = z[:, [0, 3]].T @ (logistic_link(z @ post.coefficients) - y) / 100
        assert np.max(np.abs(g)) <= cfg.refit_tol
        assert post.gradient_norm == pytest.approx(np.max(np.abs(g)), abs=1e-14)

    def test_post_refit_rejects_bad_support(self):
        z, y = make_binary(2, n=20, p_total=3)
        with pytest.raises(InvalidArgumentError, match="out of range"):
            post_logistic_refit(z, y, {5}, PenaltyConfig())


class TestFitLoop:
    def test_no_refinement_keeps_initial_loadings(self):
        z, y = make_binary(29, n=120, p_total=10)
        pen, post = fit_penalized_logistic(z, y, PenaltyConfig(max_loops=0))
        assert pen.loading_refinements == 0
        assert pen.loadings == pytest.approx(initial_loadings_logistic(z))
        assert post.support == pen.support

    def test_refinement_counter_and_loadings_change(self):
        beta = np.array([2.0, -1.2, 0.0, 0.0, 0.0, 0.0])
        z, y = make_binary(29, n=200, p_total=6, beta=beta)
        pen, post = fit_penalized_logistic(z, y, PenaltyConfig(max_loops=2, grid_size=1))
        assert pen.loading_refinements == 2
        assert pen.support  # refinement is only observable off the null fit
        assert not np.allclose(pen.loadings, initial_loadings_logistic(z))
        assert post.support == pen.support

    def test_final_fit_uses_final_loadings(self):
        z, y = make_binary(37, n=100, p_total=8)
        cfg = PenaltyConfig(max_loops=1)
        pen, _ = fit_penalized_logistic(z, y, cfg)
        lam = penalty_level(100, 8, cfg)
        redone = l1_logistic(z, y, lam, pen.loadings, cfg)
        assert redone.coefficients == pytest.approx(pen.coefficients, abs=1e-8)
