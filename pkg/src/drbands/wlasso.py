"""Weighted lasso for the instrument projection.

For target column j, the orthogonalization step regresses D_j on the
remaining design under conditional-variance weights f^2, with an l1 penalty
whose loadings are refreshed from post-fit residuals. The post-refit solves
the weighted normal equations on the selected support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._cd import wlasso_cd
from .data import link_derivative
from .errors import (
    ConfigurationError,
    DegenerateColumnError,
    InvalidArgumentError,
)
from .logistic import PenaltyConfig, _quantile_level

__all__ = [
    "WeightVector",
    "GammaFit",
    "estimated_weights",
    "penalty_level_wlasso",
    "initial_loadings_wlasso",
    "refine_loadings_wlasso",
    "weighted_lasso",
    "post_weighted_lasso",
    "fit_instrument_lasso",
    "instrument_lasso_fits",
]

_WEIGHT_CEILING = 0.25 + 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Per-observation conditional-variance weights f^2 in (0, 1/4]."""

    f2: np.ndarray

    def __post_init__(self):
        f2 = np.asarray(self.f2, dtype=np.float64)
        if f2.ndim != 1 or f2.size == 0:
            raise InvalidArgumentError("weights must form a non-empty vector")
        if not np.all(np.isfinite(f2)) or np.any(f2 <= 0.0) or np.any(f2 > _WEIGHT_CEILING):
            raise InvalidArgumentError("weights must lie in (0, 0.25]")
        f2.setflags(write=False)
        object.__setattr__(self, "f2", f2)

    @property
    def f(self) -> np.ndarray:
        return np.sqrt(self.f2)

    @property
    def n(self) -> int:
        return self.f2.shape[0]


@dataclass(frozen=True)
class GammaFit:
    """Solution of one weighted-lasso fit (penalized or post-refit).

    Post-refits carry ``loadings=None`` and ``lam=0``.
    """

    gamma: np.ndarray
    support: frozenset[int]
    loadings: np.ndarray | None
    lam: float
    objective: float
    iterations: int
    converged: bool
    kkt: float
    loading_refinements: int = 0
    diagnostics: dict = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if self.loadings is not None:
            l = np.asarray(self.loadings, dtype=np.float64)
            l.setflags(write=False)
            object.__setattr__(self, "loadings", l)
        object.__setattr__(self, "support", frozenset(int(k) for k in self.support))
        if self.diagnostics is None:
            object.__setattr__(self, "diagnostics", {})


def estimated_weights(predictor: np.ndarray, floor: float = 1e-6) -> WeightVector:
    """Weights Lambda'(predictor) from a pilot linear predictor, floored away
    from zero so saturated observations keep a positive weight."""
    predictor = np.asarray(predictor, dtype=np.float64)
    if not np.all(np.isfinite(predictor)):
        raise InvalidArgumentError("predictor contains non-finite entries")
    if floor <= 0:
        raise InvalidArgumentError("floor must be positive")
    return WeightVector(np.maximum(link_derivative(predictor), floor))


def penalty_level_wlasso(n: int, p_total: int, p_tilde: int, cfg: PenaltyConfig) -> float:
    """Penalty level for the instrument lasso.

    Same quantile rule as the logistic stage. The union-bound count N_n
    covers one lasso per target column and threshold point: with a known
    grid of G thresholds (cfg.grid_size, filled in by panel fits) the
    exact cover is N_n = p_tilde * G; without one the conservative
    continuum value N_n = (p_total - p_tilde) * p_tilde^2 * n^2 applies.
    Explicit cfg.n_n overrides either. ``p_total`` counts all design
    columns (targets plus controls).
    """
    if n < 2 or p_tilde < 1 or p_total < p_tilde:
        raise InvalidArgumentError("need n >= 2 and 1 <= p_tilde <= p_total")
    p = p_total - p_tilde
    if cfg.n_n is not None:
        n_n = cfg.n_n
    elif cfg.grid_size is not None:
        n_n = p_tilde * cfg.grid_size
    else:
        n_n = max(p, 1) * p_tilde**2 * n**2
    gamma = cfg.gamma_value(n)
    tail = gamma / (2.0 * p_total * n_n)
    return _quantile_level(n, tail, cfg.c)


def initial_loadings_wlasso(dj: np.ndarray, xj: np.ndarray, w: WeightVector) -> np.ndarray:
    """Start-up loadings: the scalar max_i max_k |f_i xj_ik| * sqrt(mean(f^2 dj^2))
    broadcast to every column (deliberately conservative)."""
    dj = np.asarray(dj, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    if xj.shape[1] == 0:
        return np.empty(0)
    f = w.f
    scale = float(np.max(np.abs(xj * f[:, None])))
    level = scale * math.sqrt(float(np.mean(w.f2 * dj * dj)))
    if level == 0.0:
        raise DegenerateColumnError("target or design is identically zero under the weights")
    return np.full(xj.shape[1], level)


def refine_loadings_wlasso(
    dj: np.ndarray,
    xj: np.ndarray,
    w: WeightVector,
    gamma: np.ndarray,
    cfg: PenaltyConfig,
) -> np.ndarray:
    """Residual-based loadings sqrt(mean(f^4 (dj - xj gamma)^2 xj_k^2)),
    floored at loading_floor times the unit-residual scale."""
    dj = np.asarray(dj, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    resid = dj - xj @ np.asarray(gamma, dtype=np.float64)
    f4 = w.f2 * w.f2
    base = np.sqrt(np.mean(f4[:, None] * xj * xj, axis=0))
    loadings = np.sqrt(np.mean((f4 * resid * resid)[:, None] * xj * xj, axis=0))
    return np.maximum(loadings, cfg.loading_floor * base)


def weighted_lasso(
    dj: np.ndarray,
    xj: np.ndarray,
    w: WeightVector,
    lam: float,
    loadings: np.ndarray,
    cfg: PenaltyConfig,
    coef0: np.ndarray | None = None,
) -> GammaFit:
    """Minimize 0.5 * mean(f^2 (dj - xj g)^2) + (lam / n) * sum_k loadings_k |g_k|
    by exact cyclic coordinate minimization."""
    dj = np.ascontiguousarray(dj, dtype=np.float64)
    xj = np.ascontiguousarray(xj, dtype=np.float64)
    n, p = xj.shape
    if dj.shape != (n,) or w.n != n:
        raise InvalidArgumentError("target, design, and weights must share n")
    if not (np.all(np.isfinite(dj)) and np.all(np.isfinite(xj))):
        raise InvalidArgumentError("design contains non-finite entries")
    if lam < 0 or not math.isfinite(lam):
        raise InvalidArgumentError("lam must be a finite non-negative value")
    if p == 0:
        return GammaFit(np.empty(0), frozenset(), np.empty(0), float(lam), 0.5 * float(np.mean(w.f2 * dj * dj)), 0, True, 0.0)
    loadings = np.asarray(loadings, dtype=np.float64)
    if loadings.shape != (p,) or np.any(loadings <= 0) or not np.all(np.isfinite(loadings)):
        raise InvalidArgumentError("loadings must be a positive finite vector, one per column")
    pen = lam * loadings / n
    coef = np.zeros(p) if coef0 is None else np.array(coef0, dtype=np.float64)
    if coef.shape != (p,):
        raise InvalidArgumentError("coef0 has wrong length")
    sweeps, kkt, converged, path = wlasso_cd(xj, w.f2, dj, pen, coef, cfg.solver_tol, cfg.max_sweeps)
    coef.setflags(write=False)
    return GammaFit(
        gamma=coef,
        support=frozenset(np.flatnonzero(coef).tolist()),
        loadings=loadings,
        lam=float(lam),
        objective=float(path[-1]),
        iterations=int(sweeps),
        converged=bool(converged),
        kkt=float(kkt),
        diagnostics={"objective_path": path},
    )


def post_weighted_lasso(
    dj: np.ndarray,
    xj: np.ndarray,
    w: WeightVector,
    support: frozenset[int] | set[int],
    cfg: PenaltyConfig,
) -> GammaFit:
    """Weighted least squares of dj on the support columns; zeros elsewhere.

    The normal equations get a 1e-10 ridge only if the weighted Gram matrix
    is numerically singular, in which case the fit is flagged.
    """
    dj = np.asarray(dj, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    n, p = xj.shape
    cols = sorted(int(k) for k in support)
    if cols and (cols[0] < 0 or cols[-1] >= p):
        raise InvalidArgumentError("support indices out of range")
    gamma = np.zeros(p)
    flags = {"ridge_jitter": False}
    if cols:
        zs = xj[:, cols]
        wz = zs * w.f2[:, None]
        gram = wz.T @ zs / n
        moment = wz.T @ dj / n
        try:
            np.linalg.cholesky(gram)
            sol = np.linalg.solve(gram, moment)
        except np.linalg.LinAlgError:
            flags["ridge_jitter"] = True
            sol = np.linalg.solve(gram + 1e-10 * np.eye(len(cols)), moment)
        gamma[cols] = sol
    resid = dj - xj @ gamma
    objective = 0.5 * float(np.mean(w.f2 * resid * resid))
    gamma.setflags(write=False)
    grad = np.abs(xj[:, cols].T @ (w.f2 * resid) / n) if cols else np.empty(0)
    return GammaFit(
        gamma=gamma,
        support=frozenset(np.flatnonzero(gamma).tolist()),
        loadings=None,
        lam=0.0,
        objective=objective,
        iterations=1,
        converged=not flags["ridge_jitter"],
        kkt=float(np.max(grad)) if grad.size else 0.0,
        diagnostics=flags,
    )


def instrument_lasso_fits(
    dj: np.ndarray, xj: np.ndarray, w: WeightVector, cfg: PenaltyConfig, p_tilde: int = 1
):
    """Penalized and post-refit instrument projections with refreshed loadings.

    ``p_tilde`` enters only through the union-bound count in the penalty
    level. Requires max_loops >= 1: the start-up loading here is a crude
    scalar and must be refreshed at least once from residuals.

    Returns (GammaFit penalized, GammaFit post).
    """
    if cfg.max_loops < 1:
        raise ConfigurationError("the instrument lasso requires max_loops >= 1")
    dj = np.ascontiguousarray(dj, dtype=np.float64)
    xj = np.ascontiguousarray(xj, dtype=np.float64)
    n, p = xj.shape
    if p == 0:
        empty = GammaFit(np.empty(0), frozenset(), np.empty(0), 0.0, 0.5 * float(np.mean(w.f2 * dj * dj)), 0, True, 0.0)
        return empty, empty
    lam = penalty_level_wlasso(n, p + p_tilde, p_tilde, cfg)
    loadings = initial_loadings_wlasso(dj, xj, w)
    coef0 = None
    pen_fit = post = None
    refinements = 0
    for m in range(cfg.max_loops + 1):
        pen_fit = weighted_lasso(dj, xj, w, lam, loadings, cfg, coef0=coef0)
        post = post_weighted_lasso(dj, xj, w, pen_fit.support, cfg)
        if m == cfg.max_loops:
            break
        loadings = refine_loadings_wlasso(dj, xj, w, post.gamma, cfg)
        refinements += 1
        coef0 = pen_fit.gamma
    pen_fit = replace(pen_fit, loading_refinements=refinements)
    post = replace(post, loading_refinements=refinements)
    return pen_fit, post


def fit_instrument_lasso(
    dj: np.ndarray, xj: np.ndarray, w: WeightVector, cfg: PenaltyConfig, p_tilde: int = 1
) -> GammaFit:
    """Post-refit instrument projection (see ``instrument_lasso_fits``)."""
    return instrument_lasso_fits(dj, xj, w, cfg, p_tilde=p_tilde)[1]
