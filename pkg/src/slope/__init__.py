"""SLOPE: sorted-L1 penalized generalized linear models.

Fits the SLOPE problem

    min over (beta0, beta) of  (1/n) sum_i f(eta_i, y_i) + alpha * J(beta)

where J is the sorted L1 norm, by a hybrid of proximal gradient steps and
coordinate descent over the coefficient clusters, with duality-gap
certified stopping, regularization-path fitting with strong-rule
screening, relaxed fits, and cross-validation.
"""

from .clusters import Clusters, pattern_rows
from .cv import CvCell, CvConfig, CvResult, cross_validate, evaluate_measure
from .duality import dual_objective, duality_gap, feasible_dual_point
from .families import (
    Family,
    encode_labels,
    gradient,
    hessian_weight,
    loss_value,
    residual,
    working_response,
)
from .matrix import (
    DesignMatrix,
    Normalization,
    as_design_matrix,
    column_dot,
    fit_normalization,
    linear_predictor,
    read_dense_csv,
    read_libsvm,
)
from .path import (
    PathConfig,
    PathResult,
    alpha_grid,
    alpha_max,
    fit_path,
    relax_fit,
)
from .solver import FitResult, SolverConfig, solve
from .sorted_l1 import (
    LambdaSequence,
    dual_norm,
    make_lambda,
    prox,
    slope_threshold,
    sorted_l1_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Clusters",
    "CvCell",
    "CvConfig",
    "CvResult",
    "DesignMatrix",
    "Family",
    "FitResult",
    "LambdaSequence",
    "Normalization",
    "PathConfig",
    "PathResult",
    "SolverConfig",
    "alpha_grid",
    "alpha_max",
    "as_design_matrix",
    "column_dot",
    "cross_validate",
    "dual_norm",
    "dual_objective",
    "duality_gap",
    "encode_labels",
    "evaluate_measure",
    "feasible_dual_point",
    "fit_normalization",
    "fit_path",
    "gradient",
    "hessian_weight",
    "linear_predictor",
    "loss_value",
    "make_lambda",
    "pattern_rows",
    "prox",
    "read_dense_csv",
    "read_libsvm",
    "relax_fit",
    "residual",
    "slope_threshold",
    "solve",
    "sorted_l1_norm",
    "working_response",
]
