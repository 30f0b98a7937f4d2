"""Uniformly valid inference for many threshold-regression coefficients.

The model: for a scalar response y, covariate split (D, X), and threshold
index u in [0, 1], the binarized response Y_u = 1{y <= (1-u) y_lo + u y_hi}
follows a logistic regression Y_u ~ Lambda(D' theta_u + X' beta_u) with a
sparse nuisance beta_u. The package estimates each target coefficient
theta_uj with an orthogonalized Z-estimator that is robust to the penalized
selection of the nuisance, and calibrates simultaneous confidence bands over
a grid of (u, j) cells with a multiplier bootstrap.

Layers, bottom up: penalized logistic pilots (`logistic`), penalized
instrument regressions (`wlasso`), per-cell orthogonal estimation
(`inference`), band calibration (`bootstrap`), synthetic-design experiments
(`mc`), and a CSV-driven command line (`cli`).
"""

from .bootstrap import (
    BandTable,
    BootstrapConfig,
    build_bands,
    critical_value,
    multiplier_sup_draw,
    sup_draws,
)
from .data import (
    ColumnRoles,
    Dataset,
    IndexGrid,
    ResponseThresholds,
    ThetaBox,
    design_without_j,
    functional_response,
    link_derivative,
    load_csv_dataset,
    logistic_link,
)
from .errors import (
    ConfigurationError,
    DataValidationError,
    DegenerateColumnError,
    DegenerateDesignError,
    DegenerateIdentificationError,
    EstimationError,
    InvalidArgumentError,
)
from .inference import (
    METHODS,
    CellEstimate,
    InferencePlan,
    ScorePanel,
    build_score_panel,
    fit_cell_double_selection,
    fit_cell_one_step,
    fit_cell_orthogonal,
    naive_post_selection_fit,
    panel_bundle,
    score_psi,
    solve_theta_check,
)
from .logistic import (
    PenaltyConfig,
    PenalizedFit,
    PostFit,
    fit_penalized_logistic,
    l1_logistic,
    penalty_level,
    post_logistic_refit,
)
from .mc import (
    MC_METHODS,
    DesignSpec,
    RejectionReport,
    ReportRow,
    TruthInfo,
    bonferroni_critical,
    gen_design1,
    gen_design2,
    generate_dataset,
    run_rejection_experiment,
)
from .wlasso import (
    GammaFit,
    WeightVector,
    estimated_weights,
    fit_instrument_lasso,
    instrument_lasso_fits,
    penalty_level_wlasso,
    post_weighted_lasso,
    weighted_lasso,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # data
    "Dataset", "ResponseThresholds", "IndexGrid", "ThetaBox", "ColumnRoles",
    "functional_response", "logistic_link", "link_derivative",
    "design_without_j", "load_csv_dataset",
    # penalized logistic
    "PenaltyConfig", "PenalizedFit", "PostFit", "penalty_level",
    "l1_logistic", "post_logistic_refit", "fit_penalized_logistic",
    # weighted lasso
    "WeightVector", "GammaFit", "estimated_weights", "penalty_level_wlasso",
    "weighted_lasso", "post_weighted_lasso", "instrument_lasso_fits",
    "fit_instrument_lasso",
    # inference
    "METHODS", "InferencePlan", "CellEstimate", "ScorePanel",
    "score_psi", "solve_theta_check", "fit_cell_orthogonal",
    "fit_cell_double_selection", "fit_cell_one_step",
    "naive_post_selection_fit", "panel_bundle", "build_score_panel",
    # bootstrap
    "BootstrapConfig", "BandTable", "multiplier_sup_draw", "sup_draws",
    "critical_value", "build_bands",
    # monte carlo
    "MC_METHODS", "DesignSpec", "TruthInfo", "ReportRow", "RejectionReport",
    "gen_design1", "gen_design2", "generate_dataset", "bonferroni_critical",
    "run_rejection_experiment",
    # errors
    "EstimationError", "InvalidArgumentError", "ConfigurationError",
    "DataValidationError", "DegenerateColumnError", "DegenerateDesignError",
    "DegenerateIdentificationError",
]
