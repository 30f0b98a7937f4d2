"""Cell-level estimation and score panels.

A cell is one (u, j) pair: threshold index u, target column j. Every method
here produces a CellEstimate (point estimate, Jacobian, standard error) plus
a standardized per-observation score column; a ScorePanel stacks the columns
for the multiplier bootstrap.

Methods
-------
orthogonal-score
    Pilot penalized logistic -> variance weights -> instrument lasso ->
    one-dimensional Z-solve of the orthogonalized score over a search box.
double-selection
    Same selection stages; refits the logistic on target + union of selected
    columns and reads the target coefficient off the refit.
one-step
    Single Newton correction of the pilot coefficient along the
    orthogonalized score.
naive
    Post-selection refit on the pilot support plus the target, standard
    errors from the refit observed information; kept as the comparator whose
    failure motivates the orthogonalized pipeline.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .data import (
    Dataset,
    IndexGrid,
    ResponseThresholds,
    ThetaBox,
    design_without_j,
    functional_response,
    link_derivative,
    logistic_link,
)
from .errors import (
    DegenerateIdentificationError,
    InvalidArgumentError,
)
from .logistic import PenaltyConfig, PenalizedFit, PostFit, fit_penalized_logistic, newton_logistic
from .wlasso import WeightVector, estimated_weights, instrument_lasso_fits

__all__ = [
    "InferencePlan",
    "CellEstimate",
    "ScorePanel",
    "PilotFit",
    "METHODS",
    "fit_pilot",
    "score_psi",
    "solve_theta_check",
    "j_hat",
    "sigma_hat",
    "one_step_correction",
    "fit_cell_orthogonal",
    "fit_cell_double_selection",
    "fit_cell_one_step",
    "naive_post_selection_fit",
    "build_score_panel",
    "panel_bundle",
]

METHODS = ("orthogonal-score", "double-selection", "one-step", "naive")


@dataclass(frozen=True)
class InferencePlan:
    """Everything a cell fit needs beyond the data: threshold rule, penalty
    configuration, Z-solve tolerances, and the variance-estimator switches.

    ``sigma_alt_inverse`` selects the inverse-moment reading of the variance
    floor (the default; the non-inverted form is kept only for comparison).
    ``sigma_at_theta_check`` evaluates the sandwich numerator at the solved
    theta instead of the pilot. ``ds_step3_x_only`` restricts the
    double-selection instrument lasso to the X block, excluding the other
    target columns.
    """

    thresholds: ResponseThresholds
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    theta_tol: float = 1e-10
    box_scale: float = 10.0
    sigma_at_theta_check: bool = False
    sigma_alt_inverse: bool = True
    ds_step3_x_only: bool = False

    def __post_init__(self):
        if self.theta_tol <= 0 or self.box_scale <= 0:
            raise InvalidArgumentError("theta_tol and box_scale must be positive")


@dataclass(frozen=True)
class CellEstimate:
    """Point estimate and variance pieces for one (u, j) cell."""

    u: float
    j: int
    method: str
    theta_check: float
    theta_pilot: float
    j_hat: float
    sigma_hat: float
    sigma_raw: float
    sigma_alt: float
    flags: dict
    diagnostics: dict

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if not self.sigma_hat > 0:
            raise InvalidArgumentError("sigma_hat must be positive")
        if self.j_hat == 0:
            raise InvalidArgumentError("j_hat must be nonzero")


@dataclass(frozen=True)
class ScorePanel:
    """Stacked standardized scores for a grid of cells.

    ``psi`` has one column per cell in row-major grid order (u outer, j
    inner); columns are centered near zero and scaled so their second moment
    is at most one when the variance floor binds.
    """

    grid: IndexGrid
    method: str
    cells: tuple[CellEstimate, ...]
    psi: np.ndarray

    def __post_init__(self):
        psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if psi.ndim != 2 or psi.shape[1] != len(self.cells):
            raise InvalidArgumentError("psi must have one column per cell")
        if len(self.cells) != self.grid.size:
            raise InvalidArgumentError("cells must cover the grid")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def n(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class PilotFit:
    """Shared first stages for one u: penalized logistic, support refit,
    linear predictor, and variance weights."""

    u: float
    y_u: np.ndarray
    pen: PenalizedFit
    post: PostFit
    predictor: np.ndarray
    weights: WeightVector


def _full_design(ds: Dataset) -> np.ndarray:
    return np.ascontiguousarray(np.hstack((ds.d, ds.x)))


def fit_pilot(ds: Dataset, u: float, plan: InferencePlan) -> PilotFit:
    """Penalized logistic pilot for threshold index u, with refit and weights."""
    y_u = functional_response(ds, u, plan.thresholds)
    z = _full_design(ds)
    pen, post = fit_penalized_logistic(z, y_u, plan.penalty)
    predictor = z @ post.coefficients
    weights = estimated_weights(predictor, floor=plan.penalty.weight_floor)
    return PilotFit(u=u, y_u=y_u, pen=pen, post=post, predictor=predictor, weights=weights)


def _beta_without_j(coef: np.ndarray, p_tilde: int, j: int) -> np.ndarray:
    # coefficients on the leave-one-target-out design, in its column order
    return np.concatenate((np.delete(coef[:p_tilde], j - 1), coef[p_tilde:]))


def score_psi(
    y_u: np.ndarray,
    dj: np.ndarray,
    xj: np.ndarray,
    theta: float,
    beta_xj: np.ndarray,
    gamma: np.ndarray,
) -> np.ndarray:
    """Orthogonalized score (y_u - Lambda(dj theta + xj beta)) * (dj - xj gamma)."""
    eta = dj * theta + (xj @ beta_xj if xj.shape[1] else 0.0)
    resid = dj - (xj @ gamma if xj.shape[1] else 0.0)
    return (y_u - logistic_link(eta)) * resid


def _instrument_residual(dj: np.ndarray, xj: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return dj - (xj @ gamma if xj.shape[1] else 0.0)


def solve_theta_check(
    y_u: np.ndarray,
    dj: np.ndarray,
    xj: np.ndarray,
    beta_xj: np.ndarray,
    gamma: np.ndarray,
    box: ThetaBox,
    tol: float = 1e-10,
    prefer: float | None = None,
):
    """Solve mean score = 0 in theta over the box.

    Scans a fine grid for sign changes, brackets with Brent to ``tol``, and
    among several roots returns the one nearest ``prefer`` (default: box
    midpoint). Without a sign change the minimizer of |mean score| on the
    box is returned: an endpoint (flag ``boundary_solution``) or, should an
    interior grid point beat both endpoints, a refined interior minimum
    (flags ``interior_min`` and ``no_root``).

    Returns (theta, mean_score_at_theta, flags).
    """
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    offset = xj @ beta_xj if xj.shape[1] else np.zeros_like(dj)
    zres = _instrument_residual(dj, xj, gamma)

    def phi(theta: float) -> float:
        return float(np.mean((y_u - logistic_link(offset + theta * dj)) * zres))

    # scalar evaluation per grid point, so the scan values are bitwise the
    # ones brentq re-evaluates; a vectorized mean can flip sign near a root
    grid = np.linspace(box.lo, box.hi, 1025)
    vals = np.array([phi(t) for t in grid])
    if prefer is None:
        prefer = 0.5 * (box.lo + box.hi)
    flags = {"boundary_solution": False, "no_root": False, "interior_min": False}

    roots = [float(grid[k]) for k in np.flatnonzero(vals == 0.0)]
    sign_change = np.flatnonzero(vals[:-1] * vals[1:] < 0.0)
    for k in sign_change:
        roots.append(float(brentq(phi, grid[k], grid[k + 1], xtol=tol)))
    if roots:
        roots.sort()
        theta = min(roots, key=lambda r: (abs(r - prefer), r))
        return float(theta), phi(theta), flags

    flags["no_root"] = True
    k = int(np.argmin(np.abs(vals)))
    if k == 0 or k == grid.shape[0] - 1:
        flags["boundary_solution"] = True
        lo_val, hi_val = abs(vals[0]), abs(vals[-1])
        theta = box.lo if lo_val <= hi_val else box.hi
        return float(theta), phi(theta), flags
    flags["interior_min"] = True
    res = minimize_scalar(
        lambda t: abs(phi(t)), bounds=(grid[k - 1], grid[k + 1]), method="bounded",
        options={"xatol": tol},
    )
    theta = float(res.x)
    return theta, phi(theta), flags


def j_hat(
    dj: np.ndarray,
    xj: np.ndarray,
    theta_pilot: float,
    beta_xj: np.ndarray,
    gamma: np.ndarray,
) -> float:
    """Orthogonality Jacobian -mean(Lambda'(dj theta + xj beta) dj (dj - xj gamma))."""
    eta = dj * theta_pilot + (xj @ beta_xj if xj.shape[1] else 0.0)
    zres = _instrument_residual(dj, xj, gamma)
    value = -float(np.mean(link_derivative(eta) * dj * zres))
    if abs(value) < 1e-10:
        raise DegenerateIdentificationError(
            f"orthogonality Jacobian {value!r} is numerically zero"
        )
    return value


def sigma_hat(
    jhat: float,
    psi: np.ndarray,
    f2: np.ndarray,
    instrument_resid: np.ndarray,
    inverse: bool = True,
):
    """Standard-error estimate with the variance floor.

    The sandwich term is mean(psi^2) / jhat^2; the floor term is the
    weighted instrument second moment, inverted under the default reading.
    Returns (sigma, sigma_raw, sigma_alt) with sigma = max of the two parts.
    """
    raw_sq = float(np.mean(psi * psi)) / (jhat * jhat)
    moment = float(np.mean(f2 * instrument_resid * instrument_resid))
    if moment <= 0.0:
        raise DegenerateIdentificationError("weighted instrument moment vanished")
    alt_sq = (1.0 / moment) if inverse else moment
    sigma = math.sqrt(max(raw_sq, alt_sq))
    if not (math.isfinite(sigma) and sigma > 0):
        raise DegenerateIdentificationError(f"sigma estimate {sigma!r} is unusable")
    return sigma, math.sqrt(raw_sq), math.sqrt(alt_sq)


def one_step_correction(theta_hat: float, jhat: float, mean_psi: float) -> float:
    """Single Newton update theta_hat - jhat^{-1} mean_psi."""
    if jhat == 0:
        raise DegenerateIdentificationError("jhat must be nonzero")
    return theta_hat - mean_psi / jhat


def _cell_common(ds: Dataset, u: float, j: int, plan: InferencePlan, pilot: PilotFit | None):
    if not 1 <= j <= ds.p_tilde:
        raise InvalidArgumentError(f"j must be in 1..{ds.p_tilde}, got {j}")
    if pilot is None:
        pilot = fit_pilot(ds, u, plan)
    dj = ds.d[:, j - 1]
    xj = design_without_j(ds, j)
    beta_xj = _beta_without_j(pilot.post.coefficients, ds.p_tilde, j)
    return pilot, dj, xj, beta_xj


def _pilot_flags(pilot: PilotFit) -> dict:
    return {
        "pilot_capped": bool(pilot.post.flags.get("capped", False)),
        "pilot_converged": bool(pilot.pen.converged and pilot.post.converged),
    }


def _os_pieces(ds, u, j, plan, pilot):
    """Selection stages shared by the orthogonal-score and one-step methods."""
    pilot, dj, xj, beta_xj = _cell_common(ds, u, j, plan, pilot)
    gamma_pen, gamma_post = instrument_lasso_fits(
        dj, xj, pilot.weights, plan.penalty, p_tilde=ds.p_tilde
    )
    gamma = gamma_post.gamma
    theta_pilot = float(pilot.post.coefficients[j - 1])
    jhat = j_hat(dj, xj, theta_pilot, beta_xj, gamma)
    psi_pilot = score_psi(pilot.y_u, dj, xj, theta_pilot, beta_xj, gamma)
    zres = _instrument_residual(dj, xj, gamma)
    return pilot, dj, xj, beta_xj, gamma_pen, gamma_post, gamma, theta_pilot, jhat, psi_pilot, zres


def _finish_cell(
    u, j, method, theta_est, theta_pilot, jhat, sigma_parts, flags, diagnostics, psi_est
):
    cell = CellEstimate(
        u=float(u),
        j=int(j),
        method=method,
        theta_check=float(theta_est),
        theta_pilot=float(theta_pilot),
        j_hat=float(jhat),
        sigma_hat=float(sigma_parts[0]),
        sigma_raw=float(sigma_parts[1]),
        sigma_alt=float(sigma_parts[2]),
        flags=flags,
        diagnostics=diagnostics,
    )
    psi_hat = -(psi_est / (sigma_parts[0] * jhat))
    psi_hat.setflags(write=False)
    return cell, psi_hat


def _cell_orthogonal(ds, u, j, plan, pilot=None):
    (pilot, dj, xj, beta_xj, gamma_pen, gamma_post, gamma, theta_pilot, jhat, psi_pilot, zres
     ) = _os_pieces(ds, u, j, plan, pilot)
    box = ThetaBox.around(theta_pilot, plan.box_scale)
    theta_check, phi_val, zflags = solve_theta_check(
        pilot.y_u, dj, xj, beta_xj, gamma, box, tol=plan.theta_tol, prefer=theta_pilot
    )
    psi_check = score_psi(pilot.y_u, dj, xj, theta_check, beta_xj, gamma)
    psi_sigma = psi_check if plan.sigma_at_theta_check else psi_pilot
    sigma_parts = sigma_hat(jhat, psi_sigma, pilot.weights.f2, zres, plan.sigma_alt_inverse)
    flags = {**_pilot_flags(pilot), **zflags,
             "gamma_converged": bool(gamma_pen.converged and gamma_post.converged)}
    diagnostics = {
        "pilot_support": len(pilot.pen.support),
        "gamma_support": len(gamma_pen.support),
        "box_lo": box.lo,
        "box_hi": box.hi,
        "mean_score": phi_val,
    }
    return _finish_cell(u, j, "orthogonal-score", theta_check, theta_pilot, jhat,
                        sigma_parts, flags, diagnostics, psi_check)


def _cell_one_step(ds, u, j, plan, pilot=None):
    (pilot, dj, xj, beta_xj, gamma_pen, gamma_post, gamma, theta_pilot, jhat, psi_pilot, zres
     ) = _os_pieces(ds, u, j, plan, pilot)
    theta_bar = one_step_correction(theta_pilot, jhat, float(np.mean(psi_pilot)))
    psi_bar = score_psi(pilot.y_u, dj, xj, theta_bar, beta_xj, gamma)
    psi_sigma = psi_bar if plan.sigma_at_theta_check else psi_pilot
    sigma_parts = sigma_hat(jhat, psi_sigma, pilot.weights.f2, zres, plan.sigma_alt_inverse)
    flags = {**_pilot_flags(pilot), "boundary_solution": False,
             "gamma_converged": bool(gamma_pen.converged and gamma_post.converged)}
    diagnostics = {
        "pilot_support": len(pilot.pen.support),
        "gamma_support": len(gamma_pen.support),
        "mean_score": float(np.mean(psi_bar)),
    }
    return _finish_cell(u, j, "one-step", theta_bar, theta_pilot, jhat,
                        sigma_parts, flags, diagnostics, psi_bar)


def _xj_position(c: int, p_tilde: int, j: int) -> int:
    # full-design column index -> leave-one-target-out column index
    if c < p_tilde:
        return c if c < j - 1 else c - 1
    return (p_tilde - 1) + (c - p_tilde)


def _cell_double_selection(ds, u, j, plan, pilot=None):
    pilot, dj, xj, beta_xj = _cell_common(ds, u, j, plan, pilot)
    p_tilde = ds.p_tilde
    if plan.ds_step3_x_only and p_tilde > 1:
        gamma_pen_x, _ = instrument_lasso_fits(dj, ds.x, pilot.weights, plan.penalty, p_tilde)
        gamma_sel = np.zeros(xj.shape[1])
        gamma_sel[p_tilde - 1 :] = gamma_pen_x.gamma
        gamma_support = frozenset((p_tilde - 1) + k for k in gamma_pen_x.support)
        gamma_converged = gamma_pen_x.converged
    else:
        gamma_pen, _ = instrument_lasso_fits(dj, xj, pilot.weights, plan.penalty, p_tilde)
        gamma_sel = gamma_pen.gamma
        gamma_support = gamma_pen.support
        gamma_converged = gamma_pen.converged
    union = set(gamma_support)
    for c in pilot.pen.support:
        if c != j - 1:
            union.add(_xj_position(c, p_tilde, j))
    cols = sorted(union)
    refit_design = np.hstack((dj[:, None], xj[:, cols])) if cols else dj[:, None]
    coef, grad_norm, converged, its, rflags = newton_logistic(
        refit_design, pilot.y_u, plan.penalty
    )
    theta_check = float(coef[0])
    predictor = refit_design @ coef
    w_refit = link_derivative(predictor)
    zres = _instrument_residual(dj, xj, gamma_sel)
    jhat_val = -float(np.mean(w_refit * dj * zres))
    if abs(jhat_val) < 1e-10:
        raise DegenerateIdentificationError(f"refit Jacobian {jhat_val!r} is numerically zero")
    psi = (pilot.y_u - logistic_link(predictor)) * zres
    f2 = np.maximum(w_refit, plan.penalty.weight_floor)
    sigma_parts = sigma_hat(jhat_val, psi, f2, zres, plan.sigma_alt_inverse)
    flags = {**_pilot_flags(pilot), "boundary_solution": False,
             "refit_capped": bool(rflags.get("capped", False)),
             "refit_converged": bool(converged),
             "gamma_converged": bool(gamma_converged)}
    diagnostics = {
        "pilot_support": len(pilot.pen.support),
        "gamma_support": len(gamma_support),
        "union_size": len(cols),
        "refit_gradient_norm": grad_norm,
        "mean_score": float(np.mean(psi)),
    }
    theta_pilot = float(pilot.post.coefficients[j - 1])
    return _finish_cell(u, j, "double-selection", theta_check, theta_pilot, jhat_val,
                        sigma_parts, flags, diagnostics, psi)


def _weighted_projection(target: np.ndarray, design: np.ndarray, w: np.ndarray):
    """Weighted least-squares coefficients of target on design; 1e-10 ridge
    only under numerical singularity (flagged)."""
    if design.shape[1] == 0:
        return np.empty(0), False
    wd = design * w[:, None]
    gram = wd.T @ design / design.shape[0]
    moment = wd.T @ target / design.shape[0]
    try:
        np.linalg.cholesky(gram)
        return np.linalg.solve(gram, moment), False
    except np.linalg.LinAlgError:
        return np.linalg.solve(gram + 1e-10 * np.eye(design.shape[1]), moment), True


def _cell_naive(ds, u, j, plan, pilot=None):
    pilot, dj, xj, beta_xj = _cell_common(ds, u, j, plan, pilot)
    cols = sorted(set(pilot.pen.support) | {j - 1})
    z = _full_design(ds)
    refit_design = z[:, cols]
    coef, grad_norm, converged, its, rflags = newton_logistic(
        refit_design, pilot.y_u, plan.penalty
    )
    pos = cols.index(j - 1)
    predictor = refit_design @ coef
    w_refit = link_derivative(predictor)
    info = (refit_design * w_refit[:, None]).T @ refit_design / ds.n
    jitter = False
    try:
        inv_info = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        jitter = True
        inv_info = np.linalg.inv(info + 1e-10 * np.eye(len(cols)))
    sigma_info_sq = float(inv_info[pos, pos])
    if not sigma_info_sq > 0:
        raise DegenerateIdentificationError("observed information is not positive definite")
    others = np.delete(refit_design, pos, axis=1)
    proj, proj_jitter = _weighted_projection(dj, others, w_refit)
    v = dj - (others @ proj if others.shape[1] else 0.0)
    jhat_val = -float(np.mean(w_refit * dj * v))
    if abs(jhat_val) < 1e-10:
        raise DegenerateIdentificationError(f"refit Jacobian {jhat_val!r} is numerically zero")
    psi = (pilot.y_u - logistic_link(predictor)) * v
    sigma = math.sqrt(sigma_info_sq)
    sigma_raw = math.sqrt(float(np.mean(psi * psi))) / abs(jhat_val)
    flags = {**_pilot_flags(pilot), "boundary_solution": False,
             "refit_capped": bool(rflags.get("capped", False)),
             "refit_converged": bool(converged),
             "ridge_jitter": bool(jitter or proj_jitter)}
    diagnostics = {
        "pilot_support": len(pilot.pen.support),
        "refit_size": len(cols),
        "refit_gradient_norm": grad_norm,
        "sigma_rule": "observed-information",
        "mean_score": float(np.mean(psi)),
    }
    theta_pilot = float(pilot.post.coefficients[j - 1])
    return _finish_cell(u, j, "naive", float(coef[pos]), theta_pilot, jhat_val,
                        (sigma, sigma_raw, sigma), flags, diagnostics, psi)


_CELL_FITTERS = {
    "orthogonal-score": _cell_orthogonal,
    "double-selection": _cell_double_selection,
    "one-step": _cell_one_step,
    "naive": _cell_naive,
}


def naive_post_selection_fit(ds, u, j, plan, pilot=None) -> CellEstimate:
    """Comparator: logistic refit on pilot support plus the target column,
    standard error from the refit observed-information inverse diagonal."""
    return _cell_naive(ds, u, j, plan, pilot)[0]


def fit_cell_orthogonal(ds, u, j, plan, pilot=None) -> CellEstimate:
    """Orthogonal-score estimate for one cell."""
    return _cell_orthogonal(ds, u, j, plan, pilot)[0]


def fit_cell_double_selection(ds, u, j, plan, pilot=None) -> CellEstimate:
    """Double-selection estimate for one cell."""
    return _cell_double_selection(ds, u, j, plan, pilot)[0]


def fit_cell_one_step(ds, u, j, plan, pilot=None) -> CellEstimate:
    """One-step-corrected estimate for one cell."""
    return _cell_one_step(ds, u, j, plan, pilot)[0]


def _bundle_for_u(ds, u, j_values, plan, methods):
    pilot = fit_pilot(ds, u, plan)
    out = {}
    for method in methods:
        fitter = _CELL_FITTERS[method]
        out[method] = [fitter(ds, u, j, plan, pilot) for j in j_values]
    return out


def _bundle_worker(args):
    ds, u, j_values, plan, methods = args
    return _bundle_for_u(ds, u, j_values, plan, methods)


def panel_bundle(
    ds: Dataset,
    grid: IndexGrid,
    plan: InferencePlan,
    methods: tuple[str, ...],
    threads: int = 1,
) -> dict[str, ScorePanel]:
    """Score panels for several methods sharing one pilot fit per u.

    Work is partitioned by u; results are assembled in grid order, so the
    output does not depend on the worker count.
    """
    for method in methods:
        if method not in _CELL_FITTERS:
            raise InvalidArgumentError(f"unknown method {method!r}")
    if any(j > ds.p_tilde for j in grid.j_values):
        raise InvalidArgumentError("grid j values exceed the number of target columns")
    if plan.penalty.grid_size is None:
        # union-bound count for the penalty level: the grid actually fit
        plan = replace(plan, penalty=replace(plan.penalty, grid_size=len(grid.u_values)))
    args = [(ds, u, grid.j_values, plan, tuple(methods)) for u in grid.u_values]
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_u = list(pool.map(_bundle_worker, args))
    else:
        per_u = [_bundle_worker(a) for a in args]
    panels = {}
    for method in methods:
        cells = []
        columns = []
        for chunk in per_u:
            for cell, psi_col in chunk[method]:
                cells.append(cell)
                columns.append(psi_col)
        psi = np.column_stack(columns)
        panels[method] = ScorePanel(grid=grid, method=method, cells=tuple(cells), psi=psi)
    return panels


def build_score_panel(
    ds: Dataset,
    grid: IndexGrid,
    plan: InferencePlan,
    method: str = "orthogonal-score",
    threads: int = 1,
) -> ScorePanel:
    """Cell estimates plus standardized score columns for every grid cell."""
    return panel_bundle(ds, grid, plan, (method,), threads=threads)[method]
